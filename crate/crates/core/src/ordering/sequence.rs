use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tx::TxDigest;
use crate::block_dag::{Block, BlockHash, DagStore, NodeId, Round};
use crate::trb::Value;

/// Where to look up the content of decided blocks.
pub trait BlockSource {
    fn block(&self, hash: &BlockHash) -> Option<&Block>;
}

impl BlockSource for DagStore {
    fn block(&self, hash: &BlockHash) -> Option<&Block> {
        self.get(hash).map(|b| b.as_ref())
    }
}

impl BlockSource for HashMap<BlockHash, Block> {
    fn block(&self, hash: &BlockHash) -> Option<&Block> {
        self.get(hash)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderingError {
    #[error("decided block {0} is not available")]
    MissingBlock(BlockHash),
}

/// Sort key: earlier round first, then higher fee, then digest, then origin node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderKey {
    pub round: Round,
    pub fee: u64,
    pub digest: TxDigest,
    pub origin: NodeId,
}

impl Ord for OrderKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.round
            .cmp(&other.round)
            .then(other.fee.cmp(&self.fee))
            .then(self.digest.cmp(&other.digest))
            .then(self.origin.cmp(&other.origin))
    }
}

impl PartialOrd for OrderKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedTx {
    pub key: OrderKey,
    pub block: BlockHash,
    #[serde(with = "hex::serde")]
    pub payload: Vec<u8>,
}

impl OrderedTx {
    pub fn fee(&self) -> u64 {
        self.key.fee
    }

    pub fn digest(&self) -> TxDigest {
        self.key.digest
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tiebreak {
    /// Higher fee first, digest breaks ties.
    #[default]
    Fee,
    /// Digest order only; fees are ignored.
    Hash,
}

fn collect(
    decided: &BTreeMap<NodeId, Value>,
    round: Round,
    blocks: &dyn BlockSource,
) -> Result<Vec<OrderedTx>, OrderingError> {
    let mut txs = Vec::new();
    for (&origin, value) in decided {
        let Some(hash) = value.block() else { continue };
        let block = blocks
            .block(&hash)
            .ok_or(OrderingError::MissingBlock(hash))?;
        for (payload, fee) in block.transactions() {
            let key = OrderKey {
                round,
                fee,
                digest: TxDigest::of(payload, fee),
                origin,
            };
            txs.push(OrderedTx {
                key,
                block: hash,
                payload: payload.to_vec(),
            });
        }
    }
    Ok(txs)
}

fn dedup(txs: Vec<OrderedTx>, seen: &mut HashSet<TxDigest>) -> Vec<OrderedTx> {
    txs.into_iter()
        .filter(|t| seen.insert(t.key.digest))
        .collect()
}

/// Transactions of one fully decided round in consensus order, each digest once.
pub fn order_round(
    decided: &BTreeMap<NodeId, Value>,
    round: Round,
    blocks: &dyn BlockSource,
) -> Result<Vec<OrderedTx>, OrderingError> {
    let mut txs = collect(decided, round, blocks)?;
    txs.sort_by_key(|a| a.key);
    Ok(dedup(txs, &mut HashSet::new()))
}

/// As [`order_round`], but ordered by digest alone.
pub fn order_round_hashcash(
    decided: &BTreeMap<NodeId, Value>,
    round: Round,
    blocks: &dyn BlockSource,
) -> Result<Vec<OrderedTx>, OrderingError> {
    let mut txs = collect(decided, round, blocks)?;
    txs.sort_by_key(|t| (t.key.digest, t.key.origin));
    Ok(dedup(txs, &mut HashSet::new()))
}

/// Orders successive rounds, suppressing digests already sequenced in earlier rounds.
#[derive(Debug, Default, Clone)]
pub struct Sequencer {
    tiebreak: Tiebreak,
    seen: HashSet<TxDigest>,
    next_round: Round,
}

impl Sequencer {
    pub fn new(tiebreak: Tiebreak) -> Self {
        Self {
            tiebreak,
            seen: HashSet::new(),
            next_round: 0,
        }
    }

    pub fn next_round(&self) -> Round {
        self.next_round
    }

    /// Orders round `self.next_round()`.
    pub fn push_round(
        &mut self,
        decided: &BTreeMap<NodeId, Value>,
        blocks: &dyn BlockSource,
    ) -> Result<Vec<OrderedTx>, OrderingError> {
        let round = self.next_round;
        let txs = match self.tiebreak {
            Tiebreak::Fee => order_round(decided, round, blocks)?,
            Tiebreak::Hash => order_round_hashcash(decided, round, blocks)?,
        };
        self.next_round += 1;
        Ok(txs
            .into_iter()
            .filter(|t| self.seen.insert(t.key.digest))
            .collect())
    }
}
