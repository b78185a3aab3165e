use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::block_dag::NodeId;
use crate::trb::{QuorumConfig, QuorumError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StakeOp {
    Lock { node: NodeId, amount: u64 },
    Delegate { node: NodeId, to: NodeId },
    Unlock { node: NodeId },
}

/// Locked stake, delegations, and the resulting per-node weights.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeState {
    pub locked: BTreeMap<NodeId, u64>,
    pub delegations: BTreeMap<NodeId, NodeId>,
    /// Nodes whose stake is released at the next epoch close.
    pub unlocking: BTreeSet<NodeId>,
    pub effective: BTreeMap<NodeId, u64>,
    pub total: u64,
}

impl StakeState {
    pub fn weight(&self, node: NodeId) -> u64 {
        self.effective.get(&node).copied().unwrap_or(0)
    }

    /// Where `locker`'s stake is credited: the end of its delegation chain,
    /// or the locker itself if the chain loops.
    pub fn delegate_of(&self, locker: NodeId) -> NodeId {
        delegate_of(&self.delegations, locker)
    }

    /// How much of `node`'s weight each locker contributed.
    pub fn contributors(&self, node: NodeId) -> BTreeMap<NodeId, u64> {
        self.locked
            .iter()
            .filter(|&(&l, &a)| a > 0 && self.delegate_of(l) == node)
            .map(|(&l, &a)| (l, a))
            .collect()
    }
}

fn delegate_of(delegations: &BTreeMap<NodeId, NodeId>, locker: NodeId) -> NodeId {
    let mut seen = BTreeSet::from([locker]);
    let mut at = locker;
    while let Some(&next) = delegations.get(&at) {
        if !seen.insert(next) {
            return locker;
        }
        at = next;
    }
    at
}

pub fn resolve_weights(
    locked: BTreeMap<NodeId, u64>,
    delegations: BTreeMap<NodeId, NodeId>,
) -> StakeState {
    let mut effective: BTreeMap<NodeId, u64> = locked.keys().map(|&n| (n, 0)).collect();
    for &to in delegations.values() {
        effective.entry(to).or_insert(0);
    }
    for (&locker, &amount) in &locked {
        *effective
            .entry(delegate_of(&delegations, locker))
            .or_insert(0) += amount;
    }
    let total = locked.values().sum();
    StakeState {
        locked,
        delegations,
        unlocking: BTreeSet::new(),
        effective,
        total,
    }
}

/// A stake-weighted quorum over nodes `0..n_nodes`.
pub fn weighted_quorum(stake: &StakeState, n_nodes: u32) -> Result<QuorumConfig, QuorumError> {
    let weights = stake
        .effective
        .iter()
        .filter(|(_, &w)| w > 0)
        .map(|(&n, &w)| (n, w))
        .collect();
    QuorumConfig::weighted(n_nodes, weights)
}
