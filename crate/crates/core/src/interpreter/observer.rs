use std::collections::BTreeMap;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use serde::Serialize;

use super::state::{BlockState, ChainState};
use super::timeout::{view_timeout, TimeoutPolicy};
use crate::block_dag::{
    Block, BlockHash, DagStore, InsertReport, InvalidReason, NodeId, Position, Round,
    SignatureScheme,
};
use crate::trb::{MessageKind, QuorumConfig, TrbMachine, TrbMessage, Value, View};

/// An observer's settled value for a position, with the earliest block round
/// at which any chain reached it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub value: Value,
    pub round: Round,
    pub block: BlockHash,
}

/// Two blocks of one observer's DAG decided different values for a position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DecisionConflict {
    pub position: Position,
    pub first: Value,
    pub second: Value,
    pub block: BlockHash,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MachineSnapshot {
    pub position: Position,
    pub view: View,
    pub current_view: View,
    pub proposal: Option<Value>,
    /// Prepares tallied for the proposal in the installed view.
    pub prepares: u64,
    pub commits: u64,
    pub decided: Option<Value>,
    pub timeout_round: Option<Round>,
}

impl MachineSnapshot {
    pub fn of(m: &TrbMachine) -> Self {
        let proposal = m.preprepared(m.view());
        Self {
            position: m.pos(),
            view: m.view(),
            current_view: m.current_view(),
            proposal,
            prepares: proposal.map_or(0, |v| m.prepare_count(m.view(), v)),
            commits: m.max_commit_count(),
            decided: m.decided(),
            timeout_round: m.timeout_round(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecisionEntry {
    pub position: Position,
    pub value: Value,
}

/// What interpreting one block did, for golden traces and determinism checks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockTrace {
    pub hash: BlockHash,
    pub node: NodeId,
    pub round: Round,
    pub timeout: u64,
    /// Blocks whose out buffers were delivered, in delivery order.
    pub delivered: Vec<BlockHash>,
    pub out: Vec<TrbMessage>,
    pub decisions: Vec<DecisionEntry>,
    /// Machines after processing, before decided ones are pruned.
    pub machines: Vec<MachineSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecisionRecord {
    pub position: Position,
    pub value: Value,
    pub round: Round,
    pub block: BlockHash,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InterpretReport {
    pub n_nodes: u32,
    pub f: u32,
    pub decided: Vec<DecisionRecord>,
    pub conflicts: Vec<DecisionConflict>,
    pub blocks: Vec<BlockTrace>,
}

/// One observer's local DAG and its interpretation.
///
/// Blocks are interpreted in the store's validity order, which is
/// topological, so the view can be fed incrementally.
pub struct ObserverView {
    store: DagStore,
    quorum: QuorumConfig,
    policy: TimeoutPolicy,
    tracing: bool,
    states: Vec<BlockState>,
    closures: Vec<FixedBitSet>,
    ordered_parents: Vec<Vec<usize>>,
    traces: Vec<BlockTrace>,
    decided: BTreeMap<Position, Decision>,
    conflicts: Vec<DecisionConflict>,
    fresh: Vec<Position>,
}

impl ObserverView {
    pub fn new(quorum: QuorumConfig, policy: TimeoutPolicy) -> Self {
        Self::with_store(DagStore::new(), quorum, policy)
    }

    pub fn with_store(store: DagStore, quorum: QuorumConfig, policy: TimeoutPolicy) -> Self {
        Self {
            store,
            quorum,
            policy,
            tracing: false,
            states: Vec::new(),
            closures: Vec::new(),
            ordered_parents: Vec::new(),
            traces: Vec::new(),
            decided: BTreeMap::new(),
            conflicts: Vec::new(),
            fresh: Vec::new(),
        }
    }

    /// Record a per-block trace of everything interpreted from now on.
    pub fn with_tracing(mut self) -> Self {
        self.tracing = true;
        self
    }

    pub fn store(&self) -> &DagStore {
        &self.store
    }

    pub fn quorum(&self) -> &QuorumConfig {
        &self.quorum
    }

    pub fn policy(&self) -> &TimeoutPolicy {
        &self.policy
    }

    pub fn insert(
        &mut self,
        block: Block,
        scheme: &dyn SignatureScheme,
    ) -> Result<InsertReport, InvalidReason> {
        self.store.insert(block, scheme)
    }

    pub fn insert_shared(
        &mut self,
        block: Arc<Block>,
        scheme: &dyn SignatureScheme,
    ) -> Result<InsertReport, InvalidReason> {
        self.store.insert_shared(block, scheme)
    }

    pub(crate) fn insert_hashed(
        &mut self,
        block: Arc<Block>,
        hash: BlockHash,
        scheme: &dyn SignatureScheme,
    ) -> Result<InsertReport, InvalidReason> {
        self.store.insert_hashed(block, hash, scheme)
    }

    /// Positions first decided since the last call, in decision order.
    pub fn take_new_decisions(&mut self) -> Vec<Position> {
        std::mem::take(&mut self.fresh)
    }

    /// Interprets every valid block not yet interpreted. Returns the number of blocks processed.
    pub fn interpret_all(&mut self) -> usize {
        let start = self.states.len();
        let end = self.store.valid_count();
        for idx in start..end {
            self.interpret_block(idx);
        }
        end - start
    }

    pub fn interpreted_count(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, hash: &BlockHash) -> Option<&BlockState> {
        self.store.index_of(hash).and_then(|i| self.states.get(i))
    }

    pub fn decided(&self) -> &BTreeMap<Position, Decision> {
        &self.decided
    }

    pub fn decision(&self, pos: &Position) -> Option<&Decision> {
        self.decided.get(pos)
    }

    pub fn conflicts(&self) -> &[DecisionConflict] {
        &self.conflicts
    }

    /// The full per-node decision map for round `k`, once every quorum position is decided.
    pub fn round_decided(&self, k: Round) -> Option<BTreeMap<NodeId, Value>> {
        (0..self.quorum.n_nodes())
            .map(|n| self.decided.get(&Position::new(n, k)).map(|d| (n, d.value)))
            .collect()
    }

    /// Traces ordered by (round, node, hash), independent of arrival order.
    pub fn traces(&self) -> Vec<&BlockTrace> {
        let mut t: Vec<&BlockTrace> = self.traces.iter().collect();
        t.sort_by_key(|t| (t.round, t.node, t.hash));
        t
    }

    pub fn report(&self) -> InterpretReport {
        InterpretReport {
            n_nodes: self.quorum.n_nodes(),
            f: self.quorum.f(),
            decided: self
                .decided
                .iter()
                .map(|(p, d)| DecisionRecord {
                    position: *p,
                    value: d.value,
                    round: d.round,
                    block: d.block,
                })
                .collect(),
            conflicts: self.conflicts.clone(),
            blocks: self.traces().into_iter().cloned().collect(),
        }
    }

    fn interpret_block(&mut self, idx: usize) {
        let block = Arc::clone(self.store.block_at(idx));
        let hash = self.store.hash_at(idx);
        let (me, k) = (block.node, block.round);

        let mut parents: Vec<usize> = Vec::new();
        for p in block.parents() {
            let pi = self
                .store
                .index_of(p)
                .expect("parents of a valid block are valid");
            if !parents.contains(&pi) {
                parents.push(pi);
            }
        }
        let mut closure = FixedBitSet::with_capacity(idx);
        for &p in &parents {
            closure.union_with(&self.closures[p]);
            closure.insert(p);
        }

        let prev = block.prev.as_ref().and_then(|h| self.store.index_of(h));
        let mut seen = FixedBitSet::with_capacity(idx);
        if let Some(p) = prev {
            seen.union_with(&self.closures[p]);
            seen.insert(p);
        }
        let order = self.delivery_order(&block, &mut seen);

        let mut chain = prev.map_or_else(ChainState::default, |p| (*self.states[p].chain).clone());
        let mut freshest: BTreeMap<NodeId, Round> = BTreeMap::new();
        for &d in &order {
            let b = self.store.block_at(d);
            if b.node != me && self.quorum.is_member(b.node) {
                let r = freshest.entry(b.node).or_insert(b.round);
                *r = (*r).max(b.round);
            }
        }
        for (node, r) in freshest {
            chain.delays.insert(node, r.abs_diff(k));
        }
        let timeout = self
            .policy
            .timeout(chain.delays.values().copied(), self.quorum.f());

        let mut ctx = Interpretation {
            chain,
            out: Vec::new(),
            decisions: Vec::new(),
            q: &self.quorum,
            me,
            round: k,
            timeout,
            tracing: self.tracing,
        };

        let mut due: Vec<Position> = ctx
            .chain
            .machines
            .iter()
            .filter(|(_, m)| m.decided().is_none() && m.timeout_round().is_some_and(|t| t <= k))
            .map(|(p, _)| *p)
            .collect();
        due.extend(
            ctx.chain
                .timers
                .iter()
                .filter(|(_, &t)| t <= k)
                .map(|(p, _)| *p),
        );
        due.sort_unstable();
        for pos in due {
            ctx.fire_timeout(pos);
        }

        let own = block.position();
        let pp = TrbMessage::new(
            own,
            me,
            MessageKind::PrePrepare {
                view: 0,
                value: Value::Block(hash),
            },
        );
        ctx.out.push(pp.clone());
        ctx.deliver(&pp);

        for node in 0..self.quorum.n_nodes() {
            let pos = Position::new(node, k);
            if node != me
                && !ctx.chain.settled.contains(&pos)
                && !ctx.chain.machines.contains_key(&pos)
            {
                ctx.chain.timers.entry(pos).or_insert(k + timeout);
            }
        }

        for &d in &order {
            let msgs = Arc::clone(&self.states[d].out);
            for m in msgs.iter() {
                ctx.deliver(m);
            }
        }

        let Interpretation {
            mut chain,
            out,
            decisions,
            ..
        } = ctx;
        if self.tracing {
            self.traces.push(BlockTrace {
                hash,
                node: me,
                round: k,
                timeout,
                delivered: order.iter().map(|&d| self.store.hash_at(d)).collect(),
                out: out.clone(),
                decisions: decisions
                    .iter()
                    .map(|&(position, value)| DecisionEntry { position, value })
                    .collect(),
                machines: chain
                    .machines
                    .values()
                    .map(|m| MachineSnapshot::of(m))
                    .collect(),
            });
        }
        let done: Vec<Position> = chain
            .machines
            .iter()
            .filter(|(_, m)| m.decided().is_some())
            .map(|(p, _)| *p)
            .collect();
        for p in done {
            chain.machines.remove(&p);
            chain.timers.remove(&p);
            chain.settled.insert(p);
        }

        for &(pos, value) in &decisions {
            self.record(pos, value, k, hash);
        }
        self.closures.push(closure);
        self.ordered_parents.push(parents);
        self.states.push(BlockState {
            out: Arc::new(out),
            decisions,
            chain: Arc::new(chain),
            timeout,
        });
    }

    /// Blocks newly visible through this block's references, each after its
    /// own undelivered ancestry: depth-first post-order, references in entry
    /// order, parents prev-first.
    fn delivery_order(&self, block: &Block, seen: &mut FixedBitSet) -> Vec<usize> {
        let mut order = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for r in block.references() {
            let ri = self
                .store
                .index_of(r)
                .expect("references of a valid block are valid");
            if seen.put(ri) {
                continue;
            }
            stack.push((ri, 0));
            while let Some(top) = stack.last_mut() {
                let (cur, i) = *top;
                match self.ordered_parents[cur].get(i) {
                    Some(&c) => {
                        top.1 += 1;
                        if !seen.put(c) {
                            stack.push((c, 0));
                        }
                    }
                    None => {
                        order.push(cur);
                        stack.pop();
                    }
                }
            }
        }
        order
    }

    fn record(&mut self, pos: Position, value: Value, round: Round, block: BlockHash) {
        match self.decided.get_mut(&pos) {
            None => {
                self.decided.insert(
                    pos,
                    Decision {
                        value,
                        round,
                        block,
                    },
                );
                self.fresh.push(pos);
            }
            Some(d) if d.value != value => {
                self.conflicts.push(DecisionConflict {
                    position: pos,
                    first: d.value,
                    second: value,
                    block,
                });
            }
            Some(d) => {
                if (round, block) < (d.round, d.block) {
                    d.round = round;
                    d.block = block;
                }
            }
        }
    }
}

struct Interpretation<'a> {
    chain: ChainState,
    out: Vec<TrbMessage>,
    decisions: Vec<(Position, Value)>,
    q: &'a QuorumConfig,
    me: NodeId,
    round: Round,
    timeout: u64,
    tracing: bool,
}

impl Interpretation<'_> {
    fn machine(&mut self, pos: Position) -> &mut TrbMachine {
        let (me, due, tracing) = (self.me, self.round + self.timeout, self.tracing);
        let timers = &mut self.chain.timers;
        let arc = self.chain.machines.entry(pos).or_insert_with(|| {
            let mut m = TrbMachine::new(pos, me);
            m.set_timeout_round(Some(timers.remove(&pos).unwrap_or(due)));
            Arc::new(if tracing { m.with_log() } else { m })
        });
        Arc::make_mut(arc)
    }

    fn deliver(&mut self, msg: &TrbMessage) {
        if self.chain.settled.contains(&msg.pos) {
            return;
        }
        let (q, round, timeout) = (self.q, self.round, self.timeout);
        let m = self.machine(msg.pos);
        let before = (m.view(), m.current_view());
        let outcome = m.step(msg, q);
        if (m.view(), m.current_view()) != before {
            m.set_timeout_round(Some(round + view_timeout(timeout, m.current_view())));
        }
        if let Some(v) = outcome.decision {
            self.decisions.push((msg.pos, v));
        }
        self.out.extend(outcome.emitted);
    }

    fn fire_timeout(&mut self, pos: Position) {
        let (q, round, timeout) = (self.q, self.round, self.timeout);
        let m = self.machine(pos);
        let outcome = m.on_timeout(q);
        m.set_timeout_round(Some(round + view_timeout(timeout, m.current_view())));
        if let Some(v) = outcome.decision {
            self.decisions.push((pos, v));
        }
        self.out.extend(outcome.emitted);
    }
}
