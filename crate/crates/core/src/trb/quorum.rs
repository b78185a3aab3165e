use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block_dag::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuorumError {
    #[error("{n_nodes} nodes cannot tolerate {f} faults (need at least {})", 3 * f + 1)]
    TooManyFaults { n_nodes: u32, f: u32 },
    #[error("quorum has no nodes")]
    Empty,
    #[error("total stake is zero")]
    ZeroStake,
    #[error("stake assigned to node {node}, outside 0..{n_nodes}")]
    UnknownNode { node: NodeId, n_nodes: u32 },
}

/// Quorum sizes, as sender counts in unweighted mode and stake amounts in weighted mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub prepare: u64,
    pub commit: u64,
    pub viewchange: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumConfig {
    n_nodes: u32,
    f: u32,
    weights: Option<BTreeMap<NodeId, u64>>,
    total: u64,
}

impl QuorumConfig {
    /// Unweighted quorum with f = ⌊(N−1)/3⌋.
    pub fn unweighted(n_nodes: u32) -> Result<Self, QuorumError> {
        if n_nodes == 0 {
            return Err(QuorumError::Empty);
        }
        Self::with_faults(n_nodes, (n_nodes - 1) / 3)
    }

    pub fn with_faults(n_nodes: u32, f: u32) -> Result<Self, QuorumError> {
        if n_nodes == 0 {
            return Err(QuorumError::Empty);
        }
        if u64::from(n_nodes) < 3 * u64::from(f) + 1 {
            return Err(QuorumError::TooManyFaults { n_nodes, f });
        }
        Ok(Self {
            n_nodes,
            f,
            weights: None,
            total: u64::from(n_nodes),
        })
    }

    /// Stake-weighted quorum over nodes `0..n_nodes`; nodes absent from `weights` hold no stake.
    pub fn weighted(n_nodes: u32, weights: BTreeMap<NodeId, u64>) -> Result<Self, QuorumError> {
        if n_nodes == 0 {
            return Err(QuorumError::Empty);
        }
        if let Some(&node) = weights.keys().find(|&&n| n >= n_nodes) {
            return Err(QuorumError::UnknownNode { node, n_nodes });
        }
        let total: u64 = weights.values().sum();
        if total == 0 {
            return Err(QuorumError::ZeroStake);
        }
        Ok(Self {
            n_nodes,
            f: (n_nodes - 1) / 3,
            weights: Some(weights),
            total,
        })
    }

    pub fn n_nodes(&self) -> u32 {
        self.n_nodes
    }

    pub fn f(&self) -> u32 {
        self.f
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_member(&self, node: NodeId) -> bool {
        node < self.n_nodes
    }

    pub fn weight(&self, node: NodeId) -> u64 {
        match &self.weights {
            None => u64::from(node < self.n_nodes),
            Some(w) => w.get(&node).copied().unwrap_or(0),
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        if self.weights.is_some() {
            let stake = 2 * self.total / 3 + 1;
            Thresholds {
                prepare: stake,
                commit: stake,
                viewchange: stake,
            }
        } else {
            let f = u64::from(self.f);
            Thresholds {
                prepare: 2 * f,
                commit: 2 * f + 1,
                viewchange: 2 * f + 1,
            }
        }
    }

    /// Prepared: in unweighted mode 2f senders other than `me`; in weighted mode
    /// the stake threshold over all senders including `me`.
    pub(crate) fn prepared(&self, tally: &Tally, me: NodeId) -> bool {
        let thr = self.thresholds().prepare;
        if self.weights.is_some() {
            tally.weight >= thr
        } else {
            let others = tally.count() - u64::from(tally.contains(me));
            others >= thr
        }
    }

    pub(crate) fn committed(&self, tally: &Tally) -> bool {
        self.reached(tally, self.thresholds().commit)
    }

    pub(crate) fn viewchanged(&self, tally: &Tally) -> bool {
        self.reached(tally, self.thresholds().viewchange)
    }

    /// More than the faulty share has spoken: f+1 senders, or stake above what
    /// the view-change threshold leaves over.
    pub(crate) fn joinable(&self, tally: &Tally) -> bool {
        if self.weights.is_some() {
            tally.weight > self.total - self.thresholds().viewchange
        } else {
            tally.count() > u64::from(self.f)
        }
    }

    fn reached(&self, tally: &Tally, thr: u64) -> bool {
        if self.weights.is_some() {
            tally.weight >= thr
        } else {
            tally.count() >= thr
        }
    }
}

/// A set of distinct senders with their accumulated weight.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tally {
    senders: FixedBitSet,
    weight: u64,
}

impl Tally {
    /// Returns false if `sender` was already counted.
    pub fn add(&mut self, sender: NodeId, q: &QuorumConfig) -> bool {
        let i = sender as usize;
        if self.senders.len() <= i {
            self.senders.grow(i + 1);
        }
        if self.senders.put(i) {
            return false;
        }
        self.weight += q.weight(sender);
        true
    }

    pub fn contains(&self, sender: NodeId) -> bool {
        self.senders.contains(sender as usize)
    }

    pub fn count(&self) -> u64 {
        self.senders.count_ones(..) as u64
    }

    pub fn weight(&self) -> u64 {
        self.weight
    }

    pub fn senders(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.senders.ones().map(|i| i as NodeId)
    }
}
