use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::block_dag::{
    Block, BlockHash, DagDump, Entry, HashMapByDigest, MacScheme, NodeId, Position, Round,
    SignatureScheme,
};
use crate::interpreter::{Decision, ObserverView};
use crate::trb::{QuorumConfig, Value};
use crate::xblockmania::{select_heads, CoverageIndex, XConfig};

use super::bytes::{byte_account_blocks, ByteModel};
use super::client_load::ClientLoad;
use super::config::{AdversaryBehavior, ConfigError, SimConfig};
use super::metrics::{
    ByteSummary, InclusionStats, Metrics, PositionMetric, SafetyViolation, Summary,
};

/// Probability that an arbitrary-refs node also broadcasts a badly signed block in a round.
const BOGUS_BLOCK_P: f64 = 0.2;
/// Probability that an arbitrary-refs node references a given newly received block.
const ARBITRARY_KEEP_P: f64 = 0.5;

struct Event {
    tick: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tick
            .total_cmp(&other.tick)
            .then(self.seq.cmp(&other.seq))
    }
}

/// A block with its hash computed once at creation.
#[derive(Clone)]
struct Sealed {
    block: Arc<Block>,
    hash: BlockHash,
}

impl Sealed {
    fn new(block: Block) -> Self {
        let hash = block.hash();
        Sealed {
            block: Arc::new(block),
            hash,
        }
    }
}

enum EventKind {
    Emit {
        node: NodeId,
        round: Round,
    },
    Deliver {
        to: NodeId,
        from: NodeId,
        block: Sealed,
    },
    Fetch {
        holder: NodeId,
        requester: NodeId,
        hashes: Vec<BlockHash>,
    },
}

struct LastSent {
    round: Round,
    tick: f64,
    block: Sealed,
}

struct SimNode {
    behavior: AdversaryBehavior,
    honest: bool,
    observes: bool,
    view: ObserverView,
    tip: Option<BlockHash>,
    fork_tip: Option<BlockHash>,
    /// Valid blocks from other nodes not yet referenced (basic mode).
    fresh: Vec<(BlockHash, NodeId)>,
    coverage: CoverageIndex,
    rng: ChaCha8Rng,
    load: ClientLoad,
    requested: HashMapByDigest<BlockHash, f64>,
    last_sent: Option<LastSent>,
    /// Highest own round each peer's chain has referenced.
    acked: Vec<Option<Round>>,
    resent: HashSet<(NodeId, Round)>,
    decided_target: u64,
}

struct InclusionProgress {
    round: Round,
    chains: u32,
}

/// A single deterministic run. Build with [`Simulation::new`], drive with [`Simulation::run`].
pub struct Simulation {
    cfg: SimConfig,
    x: Option<XConfig>,
    scheme: MacScheme,
    nodes: Vec<SimNode>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: f64,
    net_rng: ChaCha8Rng,
    jitter: Option<Exp<f64>>,
    honest_count: u32,
    honest_observers: Vec<NodeId>,
    incomplete_observers: usize,
    decision_ticks: BTreeMap<Position, f64>,
    inclusion: HashMapByDigest<BlockHash, InclusionProgress>,
    inclusion_latencies: Vec<(Round, Round)>,
    blocks_emitted: u64,
    deliveries: u64,
    fetch_requests: u64,
    retransmissions: u64,
    finished: bool,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let quorum: QuorumConfig = cfg.quorum()?;
        let x = cfg.x_config()?;
        let n = cfg.n_nodes;
        let nodes: Vec<SimNode> = (0..n)
            .map(|id| {
                let behavior = cfg.behavior(id).clone();
                let rng_seed = match behavior {
                    AdversaryBehavior::ArbitraryRefs { seed } => seed,
                    _ => cfg.seed,
                };
                SimNode {
                    honest: behavior.is_honest(),
                    observes: cfg.observes(id),
                    behavior,
                    view: ObserverView::new(quorum.clone(), cfg.timeout),
                    tip: None,
                    fork_tip: None,
                    fresh: Vec::new(),
                    coverage: CoverageIndex::new(),
                    rng: rng_for(rng_seed, 0x6e6f_6465_0000_0000 | id as u64),
                    load: ClientLoad::new(cfg.seed, id, cfg.tx_load),
                    requested: HashMapByDigest::default(),
                    last_sent: None,
                    acked: vec![None; n as usize],
                    resent: HashSet::new(),
                    decided_target: 0,
                }
            })
            .collect();
        let honest_observers: Vec<NodeId> = (0..n)
            .filter(|&i| nodes[i as usize].honest && nodes[i as usize].observes)
            .collect();
        let jitter_mean = cfg.latency.jitter_mean();
        let jitter =
            (jitter_mean > 0.0).then(|| Exp::new(1.0 / jitter_mean).expect("positive rate"));
        let mut sim = Simulation {
            x,
            scheme: node_keys(cfg.seed),
            nodes,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            net_rng: rng_for(cfg.seed, 0x6e65_7477_6f72_6b00),
            jitter,
            honest_count: cfg.honest_nodes().count() as u32,
            incomplete_observers: honest_observers.len(),
            honest_observers,
            decision_ticks: BTreeMap::new(),
            inclusion: HashMapByDigest::default(),
            inclusion_latencies: Vec::new(),
            blocks_emitted: 0,
            deliveries: 0,
            fetch_requests: 0,
            retransmissions: 0,
            finished: false,
            cfg,
        };
        for node in 0..n {
            let tick = sim.emission_tick(node, 0);
            sim.schedule(tick, EventKind::Emit { node, round: 0 });
        }
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Keys the simulated nodes sign with; derived from the seed.
    pub fn scheme(&self) -> &MacScheme {
        &self.scheme
    }

    /// Runs until every honest observer has decided every position below
    /// `rounds`, or until the round budget is exhausted and the queue drains.
    pub fn run(&mut self) -> Metrics {
        if !self.finished {
            while let Some(Reverse(ev)) = self.queue.pop() {
                self.now = ev.tick;
                match ev.kind {
                    EventKind::Emit { node, round } => self.emit(node, round),
                    EventKind::Deliver { to, from, block } => self.deliver(to, from, block),
                    EventKind::Fetch {
                        holder,
                        requester,
                        hashes,
                    } => self.fetch(holder, requester, hashes),
                }
                if self.is_done() {
                    break;
                }
            }
            self.finished = true;
        }
        self.metrics()
    }

    pub fn view(&self, node: NodeId) -> &ObserverView {
        &self.nodes[node as usize].view
    }

    /// Decided maps of every observer, honest or not.
    pub fn decisions(&self) -> BTreeMap<NodeId, &BTreeMap<Position, Decision>> {
        (0..self.cfg.n_nodes)
            .filter(|&n| self.nodes[n as usize].observes)
            .map(|n| (n, self.nodes[n as usize].view.decided()))
            .collect()
    }

    /// The node's valid blocks in the order they became valid.
    pub fn dump(&self, node: NodeId) -> DagDump {
        let store = self.nodes[node as usize].view.store();
        let blocks = store
            .valid_order()
            .iter()
            .map(|h| (**store.get(h).expect("valid")).clone())
            .collect();
        DagDump::new(self.cfg.n_nodes, self.cfg.f, blocks)
    }

    fn is_done(&self) -> bool {
        !self.honest_observers.is_empty() && self.incomplete_observers == 0
    }

    fn emission_tick(&self, node: NodeId, round: Round) -> f64 {
        round as f64 * self.cfg.block_interval
            + self.cfg.clock_skew.get(&node).copied().unwrap_or(0.0)
    }

    fn schedule(&mut self, tick: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event {
            tick,
            seq: self.seq,
            kind,
        }));
    }

    fn delay(&mut self, from: NodeId) -> f64 {
        let mut d = self.cfg.latency.base;
        if let Some(exp) = &self.jitter {
            d += exp.sample(&mut self.net_rng);
        }
        if let AdversaryBehavior::Delayer { extra_ticks } = self.nodes[from as usize].behavior {
            d += extra_ticks;
        }
        if let Some(a) = self.cfg.async_period {
            if self.now < a.good_from && a.max_extra > 0.0 {
                d += self.net_rng.random_range(0.0..a.max_extra);
            }
        }
        d
    }

    fn send(&mut self, from: NodeId, to: NodeId, block: Sealed) {
        let tick = self.now + self.delay(from);
        self.schedule(tick, EventKind::Deliver { to, from, block });
    }

    fn broadcast(&mut self, from: NodeId, block: &Sealed) {
        for to in 0..self.cfg.n_nodes {
            if to != from {
                self.send(from, to, block.clone());
            }
        }
    }

    fn emit(&mut self, me: NodeId, round: Round) {
        let behavior = self.nodes[me as usize].behavior.clone();
        if let AdversaryBehavior::Silent { from_round } = behavior {
            if round >= from_round {
                return;
            }
        }
        if round + 1 < self.cfg.max_round() {
            let tick = self.emission_tick(me, round + 1);
            self.schedule(
                tick,
                EventKind::Emit {
                    node: me,
                    round: round + 1,
                },
            );
        }
        self.blocks_emitted += 1;

        let mut entries = self.nodes[me as usize].load.next_batch();
        let (refs, covered) = self.choose_refs(me);
        entries.extend(refs.into_iter().map(Entry::Reference));

        match behavior {
            AdversaryBehavior::Equivocator { split } => {
                let node = &mut self.nodes[me as usize];
                let mut fork_a = entries.clone();
                fork_a.push(Entry::Transaction {
                    payload: b"fork-a".to_vec(),
                    fee: 0,
                });
                let mut fork_b = entries;
                fork_b.push(Entry::Transaction {
                    payload: b"fork-b".to_vec(),
                    fee: 0,
                });
                let a = Sealed::new(
                    Block::unsigned(me, round, node.tip, fork_a).sign_with(&self.scheme),
                );
                let b = Sealed::new(
                    Block::unsigned(me, round, node.fork_tip, fork_b).sign_with(&self.scheme),
                );
                node.tip = Some(a.hash);
                node.fork_tip = Some(b.hash);
                self.blocks_emitted += 1;
                self.accept_own(me, &a, Vec::new());
                self.accept_own(me, &b, Vec::new());
                for to in 0..self.cfg.n_nodes {
                    if to != me {
                        let block = if split.contains(&to) { &a } else { &b };
                        self.send(me, to, block.clone());
                    }
                }
            }
            behavior => {
                let tip = self.nodes[me as usize].tip;
                let block =
                    Sealed::new(Block::unsigned(me, round, tip, entries).sign_with(&self.scheme));
                self.nodes[me as usize].tip = Some(block.hash);
                self.accept_own(me, &block, covered);
                self.broadcast(me, &block);
                if self.nodes[me as usize].honest {
                    self.nodes[me as usize].last_sent = Some(LastSent {
                        round,
                        tick: self.now,
                        block,
                    });
                }
                if matches!(behavior, AdversaryBehavior::ArbitraryRefs { .. })
                    && round > 0
                    && self.nodes[me as usize].rng.random_bool(BOGUS_BLOCK_P)
                {
                    let mut bogus = Block::unsigned(
                        me,
                        round,
                        tip,
                        vec![Entry::Transaction {
                            payload: b"bogus".to_vec(),
                            fee: 0,
                        }],
                    );
                    bogus.sig = self.scheme.sign(me.wrapping_add(1), &bogus.hash());
                    self.broadcast(me, &Sealed::new(bogus));
                }
            }
        }
    }

    /// References for `me`'s next block and, in X mode, the store indices they newly cover.
    fn choose_refs(&mut self, me: NodeId) -> (Vec<BlockHash>, Vec<usize>) {
        let node = &mut self.nodes[me as usize];
        let store = node.view.store();
        if let AdversaryBehavior::ArbitraryRefs { .. } = node.behavior {
            let mut refs: Vec<BlockHash> = Vec::new();
            for (h, _) in std::mem::take(&mut node.fresh) {
                if node.rng.random_bool(ARBITRARY_KEEP_P) {
                    refs.push(h);
                }
            }
            let valid = store.valid_order();
            if !valid.is_empty() {
                for _ in 0..2 {
                    let h = valid[node.rng.random_range(0..valid.len())];
                    if store.get(&h).is_some_and(|b| b.node != me) && !refs.contains(&h) {
                        refs.push(h);
                    }
                }
            }
            refs.shuffle(&mut node.rng);
            return (refs, Vec::new());
        }
        match &self.x {
            None => {
                let refs = std::mem::take(&mut node.fresh)
                    .into_iter()
                    .filter(|(_, creator)| !store.is_equivocator(*creator))
                    .map(|(h, _)| h)
                    .collect();
                (refs, Vec::new())
            }
            Some(x) => {
                let heads: Vec<usize> = store
                    .head_indices()
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let creator = store.block_at(i).node;
                        creator != me && !store.is_equivocator(creator)
                    })
                    .collect();
                let refs = select_heads(&mut node.coverage, store, &heads, x, &mut node.rng);
                let mut covered = Vec::new();
                for h in &refs {
                    let idx = store.index_of(h).expect("heads are valid");
                    covered.extend(node.coverage.cover(store, idx));
                }
                (refs, covered)
            }
        }
    }

    fn accept_own(&mut self, me: NodeId, block: &Sealed, mut covered: Vec<usize>) {
        let node = &mut self.nodes[me as usize];
        node.view
            .insert_hashed(Arc::clone(&block.block), block.hash, &self.scheme)
            .expect("own blocks are valid");
        if self.x.is_some() && node.honest {
            let store = node.view.store();
            let idx = store.index_of(&block.hash).expect("own block is valid");
            covered.extend(node.coverage.cover(store, idx));
            self.record_inclusion(me, block.block.round, &covered);
        }
        self.observe(me);
    }

    fn record_inclusion(&mut self, me: NodeId, round: Round, covered: &[usize]) {
        let store = self.nodes[me as usize].view.store();
        for &idx in covered {
            let block = store.block_at(idx);
            if !self.nodes[block.node as usize].honest {
                continue;
            }
            let hash = store.hash_at(idx);
            let progress = self.inclusion.entry(hash).or_insert(InclusionProgress {
                round: block.round,
                chains: 0,
            });
            progress.chains += 1;
            if progress.chains == self.honest_count {
                self.inclusion_latencies
                    .push((block.round, round.saturating_sub(block.round)));
                self.inclusion.remove(&hash);
            }
        }
    }

    fn observe(&mut self, me: NodeId) {
        let node = &mut self.nodes[me as usize];
        if !node.observes {
            return;
        }
        node.view.interpret_all();
        let fresh = node.view.take_new_decisions();
        if !node.honest {
            return;
        }
        let target = self.cfg.n_nodes as u64 * self.cfg.rounds;
        for pos in fresh {
            if pos.round >= self.cfg.rounds {
                continue;
            }
            let t = self.decision_ticks.entry(pos).or_insert(self.now);
            *t = t.max(self.now);
            node.decided_target += 1;
            if node.decided_target == target {
                self.incomplete_observers -= 1;
            }
        }
    }

    fn deliver(&mut self, to: NodeId, from: NodeId, sealed: Sealed) {
        self.deliveries += 1;
        let basic = self.x.is_none();
        let node = &mut self.nodes[to as usize];
        let hash = sealed.hash;
        if node.view.store().contains(&hash) {
            return;
        }
        let Ok(report) = node.view.insert_hashed(sealed.block, hash, &self.scheme) else {
            return;
        };
        let store = node.view.store();
        let mut peers = Vec::new();
        for h in &report.newly_valid {
            let b = store.get(h).expect("newly valid blocks are stored");
            if b.node == to {
                continue;
            }
            if basic {
                node.fresh.push((*h, b.node));
            }
            for r in b.references() {
                if let Some(mine) = store.get(r).filter(|m| m.node == to) {
                    let acked = &mut node.acked[b.node as usize];
                    *acked = (*acked).max(Some(mine.round));
                }
            }
            if !peers.contains(&b.node) {
                peers.push(b.node);
            }
        }
        if store.is_pending(&hash) {
            self.request_missing(to, from, &hash);
        }
        self.observe(to);
        for peer in peers {
            self.maybe_retransmit(to, peer);
        }
    }

    fn request_missing(&mut self, me: NodeId, holder: NodeId, root: &BlockHash) {
        let retry = 4.0 * self.cfg.latency.base + 2.0 * self.cfg.block_interval;
        let now = self.now;
        let node = &mut self.nodes[me as usize];
        let wanted: Vec<BlockHash> = node
            .view
            .store()
            .missing_closure(root)
            .into_iter()
            .filter(|h| node.requested.get(h).is_none_or(|&t| now - t >= retry))
            .collect();
        if wanted.is_empty() {
            return;
        }
        for h in &wanted {
            node.requested.insert(*h, now);
        }
        self.fetch_requests += 1;
        let tick = now + self.delay(me);
        self.schedule(
            tick,
            EventKind::Fetch {
                holder,
                requester: me,
                hashes: wanted,
            },
        );
    }

    fn fetch(&mut self, holder: NodeId, requester: NodeId, hashes: Vec<BlockHash>) {
        if let AdversaryBehavior::Silent { from_round } = self.nodes[holder as usize].behavior {
            if self.now >= self.emission_tick(holder, from_round) {
                return;
            }
        }
        for h in hashes {
            if let Some(b) = self.nodes[holder as usize].view.store().get(&h).cloned() {
                self.send(holder, requester, Sealed { block: b, hash: h });
            }
        }
    }

    /// Re-sends our latest block to `peer` if its chain still lacks it a round trip after sending.
    fn maybe_retransmit(&mut self, me: NodeId, peer: NodeId) {
        if !self.cfg.retransmit || self.x.is_some() {
            return;
        }
        let round_trip = 2.0 * self.cfg.latency.base;
        let node = &mut self.nodes[me as usize];
        let Some(last) = &node.last_sent else { return };
        if node.acked[peer as usize] >= Some(last.round) || self.now - last.tick < round_trip {
            return;
        }
        if !node.resent.insert((peer, last.round)) {
            return;
        }
        let block = last.block.clone();
        self.retransmissions += 1;
        self.send(me, peer, block);
    }

    fn metrics(&self) -> Metrics {
        let cfg = &self.cfg;
        let observers: Vec<&ObserverView> = self
            .honest_observers
            .iter()
            .map(|&n| &self.nodes[n as usize].view)
            .collect();

        let mut positions = Vec::new();
        for k in 0..cfg.rounds {
            for n in 0..cfg.n_nodes {
                let pos = Position::new(n, k);
                let decisions: Vec<&Decision> =
                    observers.iter().filter_map(|v| v.decision(&pos)).collect();
                let complete = !observers.is_empty() && decisions.len() == observers.len();
                positions.push(PositionMetric {
                    position: pos,
                    decision: decisions.first().map(|d| d.value),
                    decision_round: decisions.iter().map(|d| d.round).min(),
                    decision_tick: if complete {
                        self.decision_ticks.get(&pos).copied()
                    } else {
                        None
                    },
                });
            }
        }
        let rounds_to_decision = Summary::of(
            positions
                .iter()
                .filter_map(|p| p.rounds_to_decision().map(|r| r as f64)),
        );

        let mut safety_violations = Vec::new();
        for (i, &a) in self.honest_observers.iter().enumerate() {
            let va = &self.nodes[a as usize].view;
            for c in va.conflicts() {
                safety_violations.push(SafetyViolation {
                    position: c.position,
                    observer_a: a,
                    value_a: c.first,
                    observer_b: a,
                    value_b: c.second,
                });
            }
            for &b in &self.honest_observers[i + 1..] {
                let vb = &self.nodes[b as usize].view;
                for (pos, da) in va.decided() {
                    if let Some(db) = vb.decision(pos) {
                        if da.value != db.value {
                            safety_violations.push(SafetyViolation {
                                position: *pos,
                                observer_a: a,
                                value_a: da.value,
                                observer_b: b,
                                value_b: db.value,
                            });
                        }
                    }
                }
            }
        }

        let equivocations_detected = (0..cfg.n_nodes)
            .filter(|&n| self.nodes[n as usize].honest)
            .flat_map(|n| {
                self.nodes[n as usize]
                    .view
                    .store()
                    .evidence()
                    .iter()
                    .map(|e| e.position)
            })
            .collect::<BTreeSet<Position>>()
            .len();

        let reference_node = (0..cfg.n_nodes)
            .find(|&n| self.nodes[n as usize].honest)
            .unwrap_or(0);
        let store = self.nodes[reference_node as usize].view.store();
        let report = byte_account_blocks(
            cfg.n_nodes,
            store
                .valid_order()
                .iter()
                .map(|h| store.get(h).expect("valid").as_ref()),
            ByteModel::default(),
        );
        let bytes = ByteSummary {
            per_block_overhead: Summary::of(report.blocks.iter().map(|b| b.overhead() as f64)),
            references_per_block: Summary::of(report.blocks.iter().map(|b| b.references as f64)),
            fit: if cfg.rounds > 3 {
                report.fit(2, cfg.rounds - 1)
            } else {
                None
            },
        };

        let mut txs_ordered = 0;
        if let Some(v) = observers.first() {
            for p in &positions {
                if let Some(Value::Block(h)) = v.decision(&p.position).map(|d| d.value) {
                    if let Some(b) = v.store().get(&h) {
                        txs_ordered += b.transactions().count() as u64;
                    }
                }
            }
        }

        let inclusion = self.x.map(|_| InclusionStats {
            latency: Summary::of(
                self.inclusion_latencies
                    .iter()
                    .filter(|(r, _)| *r < cfg.rounds)
                    .map(|&(_, lat)| lat as f64),
            ),
            incomplete: self
                .inclusion
                .values()
                .filter(|p| p.round < cfg.rounds)
                .count(),
        });

        let completed = self.honest_observers.is_empty() || self.incomplete_observers == 0;
        Metrics {
            n_nodes: cfg.n_nodes,
            f: cfg.f,
            rounds: cfg.rounds,
            completed,
            liveness_failure: !completed,
            end_tick: self.now,
            blocks_emitted: self.blocks_emitted,
            deliveries: self.deliveries,
            fetch_requests: self.fetch_requests,
            retransmissions: self.retransmissions,
            positions,
            rounds_to_decision,
            safety_violations,
            equivocations_detected,
            bytes,
            txs_ordered,
            throughput: if self.now > 0.0 {
                txs_ordered as f64 / self.now
            } else {
                0.0
            },
            inclusion,
        }
    }
}

/// Runs `cfg` to completion.
/// The signing keys of every simulated node in a run with `seed`.
pub fn node_keys(seed: u64) -> MacScheme {
    MacScheme::new(&seed.to_le_bytes())
}

pub fn run(cfg: SimConfig) -> Result<Metrics, ConfigError> {
    Ok(Simulation::new(cfg)?.run())
}
