//! Sparse head selection: each block references only X heads, chosen with
//! probability proportional to how much of the DAG they would newly cover.

use fixedbitset::FixedBitSet;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block_dag::{BlockHash, DagStore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("X must be at least 1")]
pub struct XConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct XConfig {
    heads: usize,
    pub rng_seed: u64,
}

impl XConfig {
    pub fn new(heads: usize, rng_seed: u64) -> Result<Self, XConfigError> {
        if heads == 0 {
            return Err(XConfigError);
        }
        Ok(Self { heads, rng_seed })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }
}

/// The part of an observer's valid DAG already reachable from one chain.
#[derive(Clone, Debug, Default)]
pub struct CoverageIndex {
    covered: FixedBitSet,
    // Walk scratch: a block is visited in the current walk iff marks[i] == stamp.
    marks: Vec<u32>,
    stamp: u32,
    stack: Vec<usize>,
}

impl CoverageIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_covered(&self, idx: usize) -> bool {
        self.covered.contains(idx)
    }

    pub fn covered_count(&self) -> usize {
        self.covered.count_ones(..)
    }

    /// Valid blocks reachable from `head` (inclusive) that are not yet covered.
    pub fn uncovered(&mut self, store: &DagStore, head: usize) -> usize {
        self.walk(store, head, |_| {})
    }

    /// Marks `head` and its ancestry covered; returns the newly covered indices.
    pub fn cover(&mut self, store: &DagStore, head: usize) -> Vec<usize> {
        let mut fresh = Vec::new();
        self.walk(store, head, |i| fresh.push(i));
        self.covered.grow(store.valid_count());
        for &i in &fresh {
            self.covered.insert(i);
        }
        fresh
    }

    fn walk(&mut self, store: &DagStore, head: usize, mut visit: impl FnMut(usize)) -> usize {
        if self.covered.contains(head) {
            return 0;
        }
        if self.marks.len() < store.valid_count() {
            self.marks.resize(store.valid_count(), 0);
        }
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.marks.fill(0);
            self.stamp = 1;
        }
        let stamp = self.stamp;
        self.stack.clear();
        self.stack.push(head);
        self.marks[head] = stamp;
        let mut count = 0;
        while let Some(i) = self.stack.pop() {
            count += 1;
            visit(i);
            for &p in store.parents_at(i) {
                if self.marks[p] != stamp && !self.covered.contains(p) {
                    self.marks[p] = stamp;
                    self.stack.push(p);
                }
            }
        }
        count
    }
}

/// Samples up to X distinct heads without replacement, weighted by uncovered
/// count; fully covered heads are never chosen. The result is in store order.
pub fn select_heads(
    idx: &mut CoverageIndex,
    store: &DagStore,
    heads: &[usize],
    x: &XConfig,
    rng: &mut impl Rng,
) -> Vec<BlockHash> {
    let weighted: Vec<(usize, usize)> = heads
        .iter()
        .map(|&h| (h, idx.uncovered(store, h)))
        .filter(|&(_, w)| w > 0)
        .collect();
    let mut chosen: Vec<usize> = if weighted.len() <= x.heads() {
        weighted.iter().map(|&(h, _)| h).collect()
    } else {
        weighted
            .choose_multiple_weighted(rng, x.heads(), |&(_, w)| w as f64)
            .expect("weights are positive and finite")
            .map(|&(h, _)| h)
            .collect()
    };
    chosen.sort_unstable();
    chosen.into_iter().map(|i| store.hash_at(i)).collect()
}
