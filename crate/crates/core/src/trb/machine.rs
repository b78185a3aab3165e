use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::quorum::{QuorumConfig, Tally};
use crate::block_dag::{BlockHash, NodeId, ParseHashError, Position, Round};

pub type View = u64;

/// What a position's broadcast settles on: one block, or nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Nil,
    Block(BlockHash),
}

impl Value {
    pub fn block(&self) -> Option<BlockHash> {
        match self {
            Value::Nil => None,
            Value::Block(h) => Some(*h),
        }
    }

    pub fn is_nil(&self) -> bool {
        matches!(self, Value::Nil)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nil => f.write_str("nil"),
            Value::Block(h) => write!(f, "{h}"),
        }
    }
}

impl FromStr for Value {
    type Err = ParseHashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "nil" {
            Ok(Value::Nil)
        } else {
            s.parse().map(Value::Block)
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MessageKind {
    PrePrepare {
        view: View,
        value: Value,
    },
    Prepare {
        view: View,
        value: Value,
    },
    Commit {
        view: View,
        value: Value,
    },
    ViewChange {
        new_view: View,
        committed: Option<(View, Value)>,
    },
    NewView {
        view: View,
        value: Value,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrbMessage {
    pub pos: Position,
    pub sender: NodeId,
    #[serde(flatten)]
    pub kind: MessageKind,
}

impl TrbMessage {
    pub fn new(pos: Position, sender: NodeId, kind: MessageKind) -> Self {
        Self { pos, sender, kind }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    /// Messages emitted, in emission order. Each has already been delivered to
    /// the emitting machine itself.
    pub emitted: Vec<TrbMessage>,
    /// Set when this step made the machine decide.
    pub decision: Option<Value>,
}

/// Messages a machine consumed and produced, kept only when tracing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MachineLog {
    pub inputs: Vec<TrbMessage>,
    pub outputs: Vec<TrbMessage>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct ViewChangeTally {
    senders: Tally,
    committed: Vec<Option<(View, Value)>>,
}

/// Broadcast state for one position as seen by node `me`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrbMachine {
    pos: Position,
    me: NodeId,
    view: View,
    /// View requested by a local timeout that has not been installed yet.
    vc_target: Option<View>,
    prepare_tally: BTreeMap<(View, Value), Tally>,
    commit_tally: BTreeMap<(View, Value), Tally>,
    viewchange_tally: BTreeMap<View, ViewChangeTally>,
    preprepared: BTreeMap<View, Value>,
    sent_commit: BTreeSet<View>,
    sent_newview: BTreeSet<View>,
    last_committed: Option<(View, Value)>,
    decided: Option<Value>,
    timeout_round: Option<Round>,
    log: Option<Box<MachineLog>>,
}

impl TrbMachine {
    pub fn new(pos: Position, me: NodeId) -> Self {
        Self {
            pos,
            me,
            view: 0,
            vc_target: None,
            prepare_tally: BTreeMap::new(),
            commit_tally: BTreeMap::new(),
            viewchange_tally: BTreeMap::new(),
            preprepared: BTreeMap::new(),
            sent_commit: BTreeSet::new(),
            sent_newview: BTreeSet::new(),
            last_committed: None,
            decided: None,
            timeout_round: None,
            log: None,
        }
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Box::default());
        self
    }

    pub fn pos(&self) -> Position {
        self.pos
    }

    pub fn me(&self) -> NodeId {
        self.me
    }

    /// The installed view.
    pub fn view(&self) -> View {
        self.view
    }

    /// The view this machine is working in or moving to.
    pub fn current_view(&self) -> View {
        self.vc_target.map_or(self.view, |t| t.max(self.view))
    }

    pub fn decided(&self) -> Option<Value> {
        self.decided
    }

    pub fn last_committed(&self) -> Option<(View, Value)> {
        self.last_committed
    }

    pub fn preprepared(&self, view: View) -> Option<Value> {
        self.preprepared.get(&view).copied()
    }

    pub fn timeout_round(&self) -> Option<Round> {
        self.timeout_round
    }

    pub fn set_timeout_round(&mut self, round: Option<Round>) {
        self.timeout_round = round;
    }

    pub fn prepare_count(&self, view: View, value: Value) -> u64 {
        self.prepare_tally
            .get(&(view, value))
            .map_or(0, Tally::count)
    }

    pub fn commit_count(&self, view: View, value: Value) -> u64 {
        self.commit_tally
            .get(&(view, value))
            .map_or(0, Tally::count)
    }

    /// Largest commit tally across all views and values.
    pub fn max_commit_count(&self) -> u64 {
        self.commit_tally
            .values()
            .map(Tally::count)
            .max()
            .unwrap_or(0)
    }

    pub fn log(&self) -> Option<&MachineLog> {
        self.log.as_deref()
    }

    /// Delivers one message; anything emitted in response is delivered back to
    /// this machine before returning.
    pub fn step(&mut self, msg: &TrbMessage, q: &QuorumConfig) -> StepOutcome {
        debug_assert_eq!(msg.pos, self.pos);
        let mut outcome = StepOutcome::default();
        self.drain(VecDeque::from([msg.clone()]), q, &mut outcome);
        outcome
    }

    /// Abandons the current view and asks for the next one.
    pub fn on_timeout(&mut self, q: &QuorumConfig) -> StepOutcome {
        let mut outcome = StepOutcome::default();
        if self.decided.is_some() {
            return outcome;
        }
        let target = self.current_view() + 1;
        self.vc_target = Some(target);
        let vc = self.emit(
            MessageKind::ViewChange {
                new_view: target,
                committed: self.last_committed,
            },
            &mut outcome,
        );
        self.drain(VecDeque::from([vc]), q, &mut outcome);
        outcome
    }

    fn emit(&mut self, kind: MessageKind, outcome: &mut StepOutcome) -> TrbMessage {
        let msg = TrbMessage::new(self.pos, self.me, kind);
        if let Some(log) = &mut self.log {
            log.outputs.push(msg.clone());
        }
        outcome.emitted.push(msg.clone());
        msg
    }

    fn drain(
        &mut self,
        mut queue: VecDeque<TrbMessage>,
        q: &QuorumConfig,
        outcome: &mut StepOutcome,
    ) {
        while let Some(msg) = queue.pop_front() {
            if let Some(log) = &mut self.log {
                log.inputs.push(msg.clone());
            }
            for kind in self.handle(&msg, q, outcome) {
                queue.push_back(self.emit(kind, outcome));
            }
        }
    }

    fn handle(
        &mut self,
        msg: &TrbMessage,
        q: &QuorumConfig,
        outcome: &mut StepOutcome,
    ) -> Vec<MessageKind> {
        if !q.is_member(msg.sender) {
            return Vec::new();
        }
        match msg.kind {
            MessageKind::PrePrepare { view, value } => {
                if msg.sender != self.pos.node
                    || view != self.view
                    || self.vc_target.is_some()
                    || self.preprepared.contains_key(&view)
                {
                    return Vec::new();
                }
                self.accept_proposal(view, value, q)
            }
            MessageKind::Prepare { view, value } => {
                if view != self.view || self.vc_target.is_some() {
                    return Vec::new();
                }
                self.prepare_tally
                    .entry((view, value))
                    .or_default()
                    .add(msg.sender, q);
                self.try_commit(q).into_iter().collect()
            }
            MessageKind::Commit { view, value } => {
                if view > self.current_view() {
                    return Vec::new();
                }
                let tally = self.commit_tally.entry((view, value)).or_default();
                tally.add(msg.sender, q);
                if self.decided.is_none() && q.committed(tally) {
                    self.decided = Some(value);
                    outcome.decision = Some(value);
                }
                Vec::new()
            }
            MessageKind::ViewChange {
                new_view,
                committed,
            } => {
                if new_view <= self.view {
                    return Vec::new();
                }
                let entry = self.viewchange_tally.entry(new_view).or_default();
                if entry.senders.add(msg.sender, q) {
                    entry.committed.push(committed);
                }
                let mut out = Vec::new();
                if let Some(target) = self.join_target(q) {
                    self.vc_target = Some(target);
                    out.push(MessageKind::ViewChange {
                        new_view: target,
                        committed: self.last_committed,
                    });
                }
                let current = self.current_view();
                let entry = &self.viewchange_tally[&new_view];
                let ready = q.viewchanged(&entry.senders)
                    && new_view >= current
                    && !self.sent_newview.contains(&new_view)
                    && !self.preprepared.contains_key(&new_view);
                if !ready {
                    return out;
                }
                // Carry forward the commit from the highest view; earliest report wins ties.
                let mut best: Option<(View, Value)> = None;
                for c in entry.committed.iter().flatten() {
                    if best.is_none_or(|b| c.0 > b.0) {
                        best = Some(*c);
                    }
                }
                self.sent_newview.insert(new_view);
                out.push(MessageKind::NewView {
                    view: new_view,
                    value: best.map_or(Value::Nil, |b| b.1),
                });
                out
            }
            MessageKind::NewView { view, value } => {
                if view == 0 || view < self.current_view() || self.preprepared.contains_key(&view) {
                    return Vec::new();
                }
                self.view = view;
                self.vc_target = None;
                self.accept_proposal(view, value, q)
            }
        }
    }

    /// Once senders asking for views above ours could not all be faulty, join
    /// the lowest such view so lagging timers cannot stall the quorum.
    fn join_target(&self, q: &QuorumConfig) -> Option<View> {
        if self.decided.is_some() {
            return None;
        }
        let current = self.current_view();
        let mut above = Tally::default();
        let mut lowest = None;
        for (&v, t) in self.viewchange_tally.range(current + 1..) {
            for s in t.senders.senders() {
                above.add(s, q);
            }
            lowest.get_or_insert(v);
        }
        lowest.filter(|_| q.joinable(&above))
    }

    fn accept_proposal(&mut self, view: View, value: Value, q: &QuorumConfig) -> Vec<MessageKind> {
        self.preprepared.insert(view, value);
        let mut out = vec![MessageKind::Prepare { view, value }];
        out.extend(self.try_commit(q));
        out
    }

    fn try_commit(&mut self, q: &QuorumConfig) -> Option<MessageKind> {
        let view = self.view;
        if self.vc_target.is_some() || self.sent_commit.contains(&view) {
            return None;
        }
        let value = *self.preprepared.get(&view)?;
        let tally = self.prepare_tally.get(&(view, value))?;
        if !q.prepared(tally, self.me) {
            return None;
        }
        self.sent_commit.insert(view);
        self.last_committed = Some((view, value));
        Some(MessageKind::Commit { view, value })
    }
}
