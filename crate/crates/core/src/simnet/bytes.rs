//! Wire-size accounting with a narrower hash than the one used internally.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::block_dag::{Block, DagDump, Entry, NodeId, Round};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteModel {
    pub hash_width: u64,
    /// Creator, round, entry count and signature.
    pub header: u64,
    /// Fee and length prefix per transaction.
    pub tx_overhead: u64,
}

impl Default for ByteModel {
    fn default() -> Self {
        Self {
            hash_width: 20,
            header: 80,
            tx_overhead: 12,
        }
    }
}

impl ByteModel {
    pub fn with_hash_width(hash_width: u64) -> Self {
        Self {
            hash_width,
            ..Self::default()
        }
    }

    /// Expected bytes per round for `n` nodes: `w·n² + ℓ·n + c`.
    pub fn formula(&self, n: u64, ell: f64, c: f64) -> f64 {
        (self.hash_width * n * n) as f64 + ell * n as f64 + c
    }

    pub fn block(&self, block: &Block) -> BlockBytes {
        let references = block.references().count() as u64;
        let (mut payload_bytes, mut tx_count) = (0, 0);
        for e in &block.entries {
            if let Entry::Transaction { payload, .. } = e {
                payload_bytes += payload.len() as u64;
                tx_count += 1;
            }
        }
        BlockBytes {
            node: block.node,
            round: block.round,
            references,
            reference_bytes: self.hash_width * (1 + references),
            header_bytes: self.header,
            payload_bytes,
            transaction_bytes: payload_bytes + tx_count * self.tx_overhead,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockBytes {
    pub node: NodeId,
    pub round: Round,
    pub references: u64,
    /// Hashes carried: `prev` plus one per reference.
    pub reference_bytes: u64,
    pub header_bytes: u64,
    pub payload_bytes: u64,
    pub transaction_bytes: u64,
}

impl BlockBytes {
    /// Per-block overhead: references plus header.
    pub fn overhead(&self) -> u64 {
        self.reference_bytes + self.header_bytes
    }

    /// Everything except references; the per-block `ℓ` of the formula.
    pub fn non_reference(&self) -> u64 {
        self.header_bytes + self.transaction_bytes
    }

    pub fn total(&self) -> u64 {
        self.reference_bytes + self.non_reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoundBytes {
    pub round: Round,
    pub blocks: u64,
    pub reference_bytes: u64,
    pub non_reference_bytes: u64,
}

impl RoundBytes {
    pub fn total(&self) -> u64 {
        self.reference_bytes + self.non_reference_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormulaFit {
    pub n_nodes: u32,
    pub rounds: usize,
    pub mean_reference_bytes: f64,
    /// Mean non-reference bytes per block.
    pub ell: f64,
    /// Mean residual of round totals against `w·N² + ℓ·N`.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByteReport {
    pub model: ByteModel,
    pub n_nodes: u32,
    pub blocks: Vec<BlockBytes>,
    pub rounds: Vec<RoundBytes>,
}

impl ByteReport {
    /// Fits the per-round formula over rounds `[from, to)`. Returns `None` if the window is empty.
    pub fn fit(&self, from: Round, to: Round) -> Option<FormulaFit> {
        let window: Vec<&RoundBytes> = self
            .rounds
            .iter()
            .filter(|r| r.round >= from && r.round < to)
            .collect();
        if window.is_empty() {
            return None;
        }
        let count = window.len() as f64;
        let blocks: u64 = window.iter().map(|r| r.blocks).sum();
        let non_ref: u64 = window.iter().map(|r| r.non_reference_bytes).sum();
        let ell = if blocks == 0 {
            0.0
        } else {
            non_ref as f64 / blocks as f64
        };
        let mean_total = window.iter().map(|r| r.total() as f64).sum::<f64>() / count;
        let n = self.n_nodes as u64;
        Some(FormulaFit {
            n_nodes: self.n_nodes,
            rounds: window.len(),
            mean_reference_bytes: window.iter().map(|r| r.reference_bytes as f64).sum::<f64>()
                / count,
            ell,
            c: mean_total - self.model.formula(n, ell, 0.0),
        })
    }

    pub fn max_block_overhead(&self) -> u64 {
        self.blocks
            .iter()
            .map(BlockBytes::overhead)
            .max()
            .unwrap_or(0)
    }

    pub fn max_references(&self) -> u64 {
        self.blocks.iter().map(|b| b.references).max().unwrap_or(0)
    }
}

/// Per-block and per-round byte counts for every block in `dump`.
pub fn byte_account(dump: &DagDump, model: ByteModel) -> ByteReport {
    byte_account_blocks(dump.n_nodes, dump.blocks.iter(), model)
}

pub fn byte_account_blocks<'a>(
    n_nodes: u32,
    blocks: impl Iterator<Item = &'a Block>,
    model: ByteModel,
) -> ByteReport {
    let blocks: Vec<BlockBytes> = blocks.map(|b| model.block(b)).collect();
    let mut rounds: BTreeMap<Round, RoundBytes> = BTreeMap::new();
    for b in &blocks {
        let r = rounds.entry(b.round).or_insert(RoundBytes {
            round: b.round,
            ..Default::default()
        });
        r.blocks += 1;
        r.reference_bytes += b.reference_bytes;
        r.non_reference_bytes += b.non_reference();
    }
    ByteReport {
        model,
        n_nodes,
        blocks,
        rounds: rounds.into_values().collect(),
    }
}
