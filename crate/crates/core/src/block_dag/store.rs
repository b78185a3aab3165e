use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::block::{Block, BlockHash, HashMapByDigest, HashSetByDigest, NodeId, Position, Round};
use super::crypto::SignatureScheme;

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum InvalidReason {
    #[error("signature does not verify for node {node}")]
    BadSignature { node: NodeId },
    #[error("prev has round {prev_round}, not below {round}")]
    RoundOrder { prev_round: Round, round: Round },
    #[error("genesis block carries a prev link")]
    GenesisPrev,
    #[error("non-genesis block has no prev link")]
    MissingPrev,
    #[error("prev was created by node {prev_node}, not {node}")]
    PrevCreator { prev_node: NodeId, node: NodeId },
    #[error("depends on invalid block {0}")]
    InvalidDependency(BlockHash),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Validity {
    Valid,
    /// Dependencies that are not yet stored and valid.
    Pending(BTreeSet<BlockHash>),
    Invalid(InvalidReason),
}

/// Two distinct valid blocks claiming the same position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EquivocationEvidence {
    pub position: Position,
    pub block_a: BlockHash,
    pub block_b: BlockHash,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InsertReport {
    /// Blocks that became valid, in an order where every block follows its dependencies.
    pub newly_valid: Vec<BlockHash>,
    pub equivocations: Vec<EquivocationEvidence>,
    /// Pending blocks dropped because a dependency turned out invalid.
    pub rejected: Vec<(BlockHash, InvalidReason)>,
}

/// The locally stored block DAG.
///
/// Valid blocks get a dense index in the order they became valid; since a
/// block is only promoted once everything it references is valid, that order
/// is topological.
#[derive(Default, Clone)]
pub struct DagStore {
    blocks: HashMapByDigest<BlockHash, Arc<Block>>,
    index: HashMapByDigest<BlockHash, usize>,
    order: Vec<BlockHash>,
    parent_index: Vec<Vec<usize>>,
    by_position: BTreeMap<Position, Vec<BlockHash>>,
    heads: BTreeSet<usize>,
    pending: HashMapByDigest<BlockHash, BTreeSet<BlockHash>>,
    waiting: HashMapByDigest<BlockHash, Vec<BlockHash>>,
    rejected: HashMapByDigest<BlockHash, InvalidReason>,
    evidence: Vec<EquivocationEvidence>,
    equivocators: BTreeSet<NodeId>,
}

/// Checks the signature, then the block's structure against `store`.
pub fn validate_block(store: &DagStore, block: &Block, scheme: &dyn SignatureScheme) -> Validity {
    validate_hashed(store, block, &block.hash(), scheme)
}

fn validate_hashed(
    store: &DagStore,
    block: &Block,
    hash: &BlockHash,
    scheme: &dyn SignatureScheme,
) -> Validity {
    if !scheme.verify(block.node, hash, &block.sig) {
        return Validity::Invalid(InvalidReason::BadSignature { node: block.node });
    }
    store.check_structure(block)
}

impl DagStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn validate(&self, block: &Block, scheme: &dyn SignatureScheme) -> Validity {
        validate_block(self, block, scheme)
    }

    /// Structural checks against the current store; the signature is checked separately.
    fn check_structure(&self, block: &Block) -> Validity {
        match (block.round, &block.prev) {
            (0, Some(_)) => return Validity::Invalid(InvalidReason::GenesisPrev),
            (r, None) if r > 0 => return Validity::Invalid(InvalidReason::MissingPrev),
            _ => {}
        }
        let mut missing = BTreeSet::new();
        for parent in block.parents() {
            if self.rejected.contains_key(parent) {
                return Validity::Invalid(InvalidReason::InvalidDependency(*parent));
            }
            if !self.index.contains_key(parent) {
                missing.insert(*parent);
            }
        }
        if let Some(prev) = block.prev.as_ref().and_then(|p| self.valid_block(p)) {
            if prev.node != block.node {
                return Validity::Invalid(InvalidReason::PrevCreator {
                    prev_node: prev.node,
                    node: block.node,
                });
            }
            if prev.round >= block.round {
                return Validity::Invalid(InvalidReason::RoundOrder {
                    prev_round: prev.round,
                    round: block.round,
                });
            }
        }
        if missing.is_empty() {
            Validity::Valid
        } else {
            Validity::Pending(missing)
        }
    }

    /// Stores `block`. Inserting a block already stored is a no-op; inserting a
    /// block already rejected returns the original reason.
    pub fn insert(
        &mut self,
        block: Block,
        scheme: &dyn SignatureScheme,
    ) -> Result<InsertReport, InvalidReason> {
        self.insert_shared(Arc::new(block), scheme)
    }

    /// As [`DagStore::insert`], sharing the allocation with other stores.
    pub fn insert_shared(
        &mut self,
        block: Arc<Block>,
        scheme: &dyn SignatureScheme,
    ) -> Result<InsertReport, InvalidReason> {
        let hash = block.hash();
        self.insert_hashed(block, hash, scheme)
    }

    /// As [`DagStore::insert_shared`] with the hash already computed by the caller.
    pub(crate) fn insert_hashed(
        &mut self,
        block: Arc<Block>,
        hash: BlockHash,
        scheme: &dyn SignatureScheme,
    ) -> Result<InsertReport, InvalidReason> {
        debug_assert_eq!(hash, block.hash());
        if let Some(reason) = self.rejected.get(&hash) {
            return Err(reason.clone());
        }
        if self.blocks.contains_key(&hash) {
            return Ok(InsertReport::default());
        }
        match validate_hashed(self, &block, &hash, scheme) {
            Validity::Invalid(reason) => {
                self.rejected.insert(hash, reason.clone());
                Err(reason)
            }
            Validity::Pending(missing) => {
                for dep in &missing {
                    self.waiting.entry(*dep).or_default().push(hash);
                }
                self.pending.insert(hash, missing);
                self.blocks.insert(hash, block);
                Ok(InsertReport::default())
            }
            Validity::Valid => {
                self.blocks.insert(hash, block);
                let mut report = InsertReport::default();
                self.promote(hash, &mut report);
                Ok(report)
            }
        }
    }

    fn promote(&mut self, first: BlockHash, report: &mut InsertReport) {
        let mut queue = std::collections::VecDeque::from([first]);
        while let Some(hash) = queue.pop_front() {
            self.mark_valid(hash, report);
            for waiter in self.waiting.remove(&hash).unwrap_or_default() {
                let Some(missing) = self.pending.get_mut(&waiter) else {
                    continue;
                };
                missing.remove(&hash);
                if !missing.is_empty() {
                    continue;
                }
                self.pending.remove(&waiter);
                let block = Arc::clone(&self.blocks[&waiter]);
                match self.check_structure(&block) {
                    Validity::Valid => queue.push_back(waiter),
                    Validity::Invalid(reason) => self.reject_cascade(waiter, reason, report),
                    Validity::Pending(again) => {
                        for dep in &again {
                            self.waiting.entry(*dep).or_default().push(waiter);
                        }
                        self.pending.insert(waiter, again);
                    }
                }
            }
        }
    }

    fn mark_valid(&mut self, hash: BlockHash, report: &mut InsertReport) {
        let block = Arc::clone(&self.blocks[&hash]);
        let idx = self.order.len();
        let mut parents: Vec<usize> = block.parents().map(|p| self.index[p]).collect();
        parents.sort_unstable();
        parents.dedup();
        for p in &parents {
            self.heads.remove(p);
        }
        self.heads.insert(idx);
        self.index.insert(hash, idx);
        self.order.push(hash);
        self.parent_index.push(parents);

        let slot = self.by_position.entry(block.position()).or_default();
        if let Some(first) = slot.first() {
            let ev = EquivocationEvidence {
                position: block.position(),
                block_a: *first,
                block_b: hash,
            };
            self.evidence.push(ev);
            self.equivocators.insert(block.node);
            report.equivocations.push(ev);
        }
        slot.push(hash);
        report.newly_valid.push(hash);
    }

    fn reject_cascade(
        &mut self,
        first: BlockHash,
        reason: InvalidReason,
        report: &mut InsertReport,
    ) {
        let mut stack = vec![(first, reason)];
        while let Some((hash, reason)) = stack.pop() {
            self.pending.remove(&hash);
            self.blocks.remove(&hash);
            for waiter in self.waiting.remove(&hash).unwrap_or_default() {
                if self.pending.contains_key(&waiter) {
                    stack.push((waiter, InvalidReason::InvalidDependency(hash)));
                }
            }
            self.rejected.insert(hash, reason.clone());
            report.rejected.push((hash, reason));
        }
    }

    /// Hashes reachable from `root` through `prev` and references that are not stored.
    pub fn missing_closure(&self, root: &BlockHash) -> BTreeSet<BlockHash> {
        let mut missing = BTreeSet::new();
        let mut seen = HashSetByDigest::default();
        let mut stack = vec![*root];
        while let Some(h) = stack.pop() {
            if !seen.insert(h) {
                continue;
            }
            if self.index.contains_key(&h) {
                // Valid blocks have a complete ancestry.
                continue;
            }
            match self.blocks.get(&h) {
                Some(b) => stack.extend(b.parents().copied()),
                None => {
                    missing.insert(h);
                }
            }
        }
        missing
    }

    pub fn get(&self, hash: &BlockHash) -> Option<&Arc<Block>> {
        self.blocks.get(hash)
    }

    pub fn valid_block(&self, hash: &BlockHash) -> Option<&Arc<Block>> {
        self.index.get(hash).map(|_| &self.blocks[hash])
    }

    pub fn contains(&self, hash: &BlockHash) -> bool {
        self.blocks.contains_key(hash)
    }

    pub fn is_valid(&self, hash: &BlockHash) -> bool {
        self.index.contains_key(hash)
    }

    pub fn is_pending(&self, hash: &BlockHash) -> bool {
        self.pending.contains_key(hash)
    }

    pub fn rejected(&self, hash: &BlockHash) -> Option<&InvalidReason> {
        self.rejected.get(hash)
    }

    pub fn valid_count(&self) -> usize {
        self.order.len()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    /// Valid blocks in the order they became valid.
    pub fn valid_order(&self) -> &[BlockHash] {
        &self.order
    }

    pub fn index_of(&self, hash: &BlockHash) -> Option<usize> {
        self.index.get(hash).copied()
    }

    pub fn hash_at(&self, idx: usize) -> BlockHash {
        self.order[idx]
    }

    pub fn block_at(&self, idx: usize) -> &Arc<Block> {
        &self.blocks[&self.order[idx]]
    }

    /// Sorted, deduplicated valid indices of a valid block's parents.
    pub fn parents_at(&self, idx: usize) -> &[usize] {
        &self.parent_index[idx]
    }

    /// Valid blocks not referenced by any other valid block, by valid index.
    pub fn head_indices(&self) -> &BTreeSet<usize> {
        &self.heads
    }

    pub fn heads(&self) -> Vec<BlockHash> {
        self.heads.iter().map(|&i| self.order[i]).collect()
    }

    pub fn blocks_at(&self, pos: &Position) -> &[BlockHash] {
        self.by_position.get(pos).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn evidence(&self) -> &[EquivocationEvidence] {
        &self.evidence
    }

    pub fn is_equivocator(&self, node: NodeId) -> bool {
        self.equivocators.contains(&node)
    }

    pub fn equivocators(&self) -> &BTreeSet<NodeId> {
        &self.equivocators
    }

    /// Every stored block (valid or pending), in no particular order.
    pub fn stored(&self) -> impl Iterator<Item = &Arc<Block>> + '_ {
        self.blocks.values()
    }
}
