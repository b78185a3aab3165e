use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::block_dag::{NodeId, Position, Round};
use crate::trb::{TrbMachine, TrbMessage, Value};

/// Positions a chain has finished with: every round below `floor[node]`,
/// plus the sparse rounds above it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct SettledSet {
    floor: BTreeMap<NodeId, Round>,
    sparse: BTreeSet<Position>,
}

impl SettledSet {
    pub fn contains(&self, pos: &Position) -> bool {
        self.floor.get(&pos.node).is_some_and(|&f| pos.round < f) || self.sparse.contains(pos)
    }

    pub fn insert(&mut self, pos: Position) {
        if self.contains(&pos) {
            return;
        }
        self.sparse.insert(pos);
        let floor = self.floor.entry(pos.node).or_insert(0);
        while self.sparse.remove(&Position::new(pos.node, *floor)) {
            *floor += 1;
        }
    }
}

/// Per-chain interpretation state, inherited by the next block of the chain.
#[derive(Clone, Debug, Default)]
pub(crate) struct ChainState {
    pub machines: BTreeMap<Position, Arc<TrbMachine>>,
    /// Positions that only have a pending view-0 timeout so far.
    pub timers: BTreeMap<Position, Round>,
    pub settled: SettledSet,
    /// Latest observed delay, in rounds, per peer.
    pub delays: BTreeMap<NodeId, u64>,
}

/// Interpretation result attached to one valid block.
#[derive(Clone, Debug)]
pub struct BlockState {
    pub(crate) out: Arc<Vec<TrbMessage>>,
    pub(crate) decisions: Vec<(Position, Value)>,
    pub(crate) chain: Arc<ChainState>,
    pub(crate) timeout: u64,
}

impl BlockState {
    /// Messages emitted while interpreting this block, in emission order.
    pub fn out(&self) -> &[TrbMessage] {
        &self.out
    }

    /// Positions whose machine in this block reached a decision.
    pub fn decisions(&self) -> &[(Position, Value)] {
        &self.decisions
    }

    pub fn machine(&self, pos: &Position) -> Option<&TrbMachine> {
        self.chain.machines.get(pos).map(Arc::as_ref)
    }

    pub fn machines(&self) -> impl Iterator<Item = &TrbMachine> + '_ {
        self.chain.machines.values().map(Arc::as_ref)
    }

    pub fn machine_count(&self) -> usize {
        self.chain.machines.len()
    }

    pub fn is_settled(&self, pos: &Position) -> bool {
        self.chain.settled.contains(pos)
    }

    pub fn pending_timer(&self, pos: &Position) -> Option<Round> {
        self.chain.timers.get(pos).copied()
    }

    /// Timeout length in rounds in force for this block.
    pub fn timeout(&self) -> u64 {
        self.timeout
    }
}
