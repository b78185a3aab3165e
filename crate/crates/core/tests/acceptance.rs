//! Acceptance gate. Each test prints one `criterion N: PASS|FAIL` line with
//! the measured numbers; run with `--nocapture --test-threads=1` to read them
//! in order.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use blockmania::block_dag::{Block, BlockHash, DagDump, Entry, MacScheme, NodeId, Position, Round};
use blockmania::fixtures::lockstep;
use blockmania::interpreter::{ObserverView, TimeoutPolicy};
use blockmania::ordering::{
    execute, AccountId, AccountKeys, Ledger, NoOpReason, OrderedTx, Receipt, Sequencer, Tiebreak,
    TxEnvelope, TxKind,
};
use blockmania::simnet::{
    byte_account, increasing_region, linear_fit, run, run_many, sweep, AdversaryBehavior,
    AsyncPeriod, ByteModel, Metrics, Mode, Observers, SimConfig, Simulation, SweepConfig, TxLoad,
};
use blockmania::stake::{epoch_close, resolve_weights, EpochConfig};
use blockmania::trb::{MessageKind, QuorumConfig, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("criterion {id}: PASS  {detail}"),
        Err(detail) => {
            println!("criterion {id}: FAIL  {detail}");
            panic!("criterion {id} failed: {detail}");
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn interpret(blocks: &[Block], quorum: QuorumConfig) -> ObserverView {
    interpret_with(blocks, quorum, &MacScheme::default())
}

fn interpret_with(blocks: &[Block], quorum: QuorumConfig, scheme: &MacScheme) -> ObserverView {
    let mut view = ObserverView::new(quorum, TimeoutPolicy::default()).with_tracing();
    for b in blocks {
        view.insert(b.clone(), scheme)
            .expect("fixture blocks are well formed");
    }
    view.interpret_all();
    view
}

fn block_at(blocks: &[Block], node: NodeId, round: Round) -> &Block {
    blocks
        .iter()
        .find(|b| b.node == node && b.round == round)
        .expect("fixture block")
}

fn kinds_for(view: &ObserverView, b: &Block, pos: Position) -> Vec<&'static str> {
    view.state(&b.hash())
        .expect("interpreted")
        .out()
        .iter()
        .filter(|m| m.pos == pos)
        .map(|m| match m.kind {
            MessageKind::PrePrepare { .. } => "pre-prepare",
            MessageKind::Prepare { .. } => "prepare",
            MessageKind::Commit { .. } => "commit",
            MessageKind::ViewChange { .. } => "view-change",
            MessageKind::NewView { .. } => "new-view",
        })
        .collect()
}

fn steady_state() -> Result<String, String> {
    let start = Instant::now();
    let blocks = lockstep(4, 12, &BTreeSet::new(), &MacScheme::default());
    let view = interpret(&blocks, QuorumConfig::unweighted(4).unwrap());
    let mut checked = 0;
    for k in 0..9 {
        for n in 0..4 {
            let d = view
                .decision(&Position::new(n, k))
                .ok_or(format!("({n},{k}) undecided"))?;
            ensure(d.round == k + 3, || {
                format!("({n},{k}) decided at round {}", d.round)
            })?;
            ensure(
                d.value == Value::Block(block_at(&blocks, n, k).hash()),
                || format!("({n},{k}) wrong value"),
            )?;
            checked += 1;
        }
    }
    ensure(view.conflicts().is_empty(), || {
        "conflicting decisions".into()
    })?;

    let m = run(SimConfig::new(4, 20, 1.0, 7)).map_err(|e| e.to_string())?;
    ensure(m.completed && m.is_safe(), || {
        "simulated run incomplete or unsafe".into()
    })?;
    let sim_rounds: BTreeSet<u64> = m
        .positions
        .iter()
        .filter_map(|p| p.rounds_to_decision())
        .collect();
    ensure(sim_rounds == BTreeSet::from([3]), || {
        format!("simulated rounds-to-decision {sim_rounds:?}")
    })?;

    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("{checked} fixture positions and {} simulated positions decided after exactly 3 rounds in {elapsed:?}", m.positions.len()))
}

fn view_change() -> Result<String, String> {
    let start = Instant::now();
    let blocks = lockstep(4, 17, &BTreeSet::from([3]), &MacScheme::default());
    let view = interpret(&blocks, QuorumConfig::unweighted(4).unwrap());
    let pos = Position::new(3, 2);
    for n in 0..3 {
        let r2 = view.state(&block_at(&blocks, n, 2).hash()).unwrap();
        ensure(r2.timeout() == 10, || {
            format!("node {n}: T = {}", r2.timeout())
        })?;
        ensure(r2.pending_timer(&pos) == Some(12), || {
            format!("node {n}: timer {:?}", r2.pending_timer(&pos))
        })?;
        for k in 3..12 {
            let kinds = kinds_for(&view, block_at(&blocks, n, k), pos);
            ensure(kinds.is_empty(), || {
                format!("node {n} round {k}: early {kinds:?}")
            })?;
        }
        let expect: [(Round, &[&str]); 3] = [
            (12, &["view-change"]),
            (13, &["new-view", "prepare"]),
            (14, &["commit"]),
        ];
        for (k, want) in expect {
            let got = kinds_for(&view, block_at(&blocks, n, k), pos);
            ensure(got == want, || {
                format!("node {n} round {k}: {got:?}, want {want:?}")
            })?;
        }
        let r15 = view.state(&block_at(&blocks, n, 15).hash()).unwrap();
        ensure(r15.decisions().contains(&(pos, Value::Nil)), || {
            format!("node {n}: no Nil at round 15")
        })?;
    }
    let d = view.decision(&pos).ok_or("(3,2) undecided")?;
    ensure(d.value == Value::Nil && d.round == 15, || {
        format!("decided {:?} at {}", d.value, d.round)
    })?;

    let mut cfg = SimConfig::new(4, 6, 1.0, 3);
    cfg.adversaries
        .insert(3, AdversaryBehavior::Silent { from_round: 0 });
    let m = run(cfg).map_err(|e| e.to_string())?;
    let p = m
        .positions
        .iter()
        .find(|p| p.position == pos)
        .ok_or("no simulated (3,2)")?;
    ensure(
        p.decision == Some(Value::Nil) && p.decision_round == Some(15),
        || format!("simulated {p:?}"),
    )?;

    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "timer at 2 fires at 12, new-view at 13, Nil from round-15 blocks, in {elapsed:?}"
    ))
}

/// `count` seeded adversarial configurations over N ∈ {4, 7, 10}.
fn adversarial_configs(count: u64) -> Vec<SimConfig> {
    let sizes = [4u32, 7, 10];
    (0..count)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5afe_0000 + seed);
            let n = sizes[seed as usize % sizes.len()];
            let mut cfg = SimConfig::new(n, 8, rng.random_range(0.3..3.0), seed);
            // Doubling view timers make recovery after a long async window slow.
            cfg.max_round = Some(300);
            let f = cfg.f as usize;
            let mut nodes: Vec<NodeId> = (0..n).collect();
            nodes.shuffle(&mut rng);
            for &node in nodes.iter().take(rng.random_range(0..=f)) {
                let behavior = match rng.random_range(0..4) {
                    0 => AdversaryBehavior::Silent {
                        from_round: rng.random_range(0..6),
                    },
                    1 => {
                        let split = (0..n)
                            .filter(|&m| m != node && rng.random_bool(0.5))
                            .collect();
                        AdversaryBehavior::Equivocator { split }
                    }
                    2 => AdversaryBehavior::Delayer {
                        extra_ticks: rng.random_range(1.0..10.0),
                    },
                    _ => AdversaryBehavior::ArbitraryRefs { seed: rng.random() },
                };
                cfg.adversaries.insert(node, behavior);
            }
            if rng.random_bool(0.5) {
                cfg.async_period = Some(AsyncPeriod {
                    good_from: rng.random_range(5.0..30.0),
                    max_extra: rng.random_range(2.0..12.0),
                });
            }
            if rng.random_bool(0.3) {
                cfg.tx_load = TxLoad {
                    rate: 2,
                    payload_size: 16,
                };
            }
            cfg
        })
        .collect()
}

fn safety() -> Result<String, String> {
    let configs = adversarial_configs(200);
    let results = run_many(&configs);
    let mut completed = 0;
    let mut equivocations = 0;
    for (cfg, r) in configs.iter().zip(results) {
        let m: Metrics = r.map_err(|e| format!("seed {}: {e}", cfg.seed))?;
        ensure(m.is_safe(), || {
            format!(
                "seed {} n={}: {:?}",
                cfg.seed, cfg.n_nodes, m.safety_violations
            )
        })?;
        completed += usize::from(m.completed);
        equivocations += usize::from(m.equivocations_detected > 0);
    }
    Ok(format!(
        "200 runs, 0 disagreements ({completed} completed within the round budget, {equivocations} with equivocation detected)"
    ))
}

fn determinism() -> Result<String, String> {
    let mut positions = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xd_e7e4 + seed);
        let n = [4u32, 7][seed as usize % 2];
        let mut cfg = SimConfig::new(n, 6, rng.random_range(0.5..4.0), seed);
        cfg.observers = Observers::None;
        cfg.max_round = Some(rng.random_range(8..16));
        if seed % 3 == 0 {
            cfg.adversaries
                .insert(n - 1, AdversaryBehavior::Equivocator { split: [0].into() });
        }
        if seed % 3 == 1 {
            cfg.adversaries.insert(
                n - 1,
                AdversaryBehavior::Silent {
                    from_round: rng.random_range(0..4),
                },
            );
        }
        let mut sim = Simulation::new(cfg).map_err(|e| e.to_string())?;
        sim.run();
        let dump = DagDump::parse(&sim.dump(0).to_text()).map_err(|e| e.to_string())?;
        let quorum = QuorumConfig::with_faults(dump.n_nodes, dump.f).unwrap();
        let scheme = sim.scheme();

        let reference =
            serde_json::to_string(&interpret_with(&dump.blocks, quorum.clone(), scheme).report())
                .unwrap();
        let again =
            serde_json::to_string(&interpret_with(&dump.blocks, quorum.clone(), scheme).report())
                .unwrap();
        ensure(reference == again, || {
            format!("dump {seed}: repeated interpretation differs")
        })?;
        for _ in 0..3 {
            let mut shuffled = dump.blocks.clone();
            shuffled.shuffle(&mut rng);
            let mut view =
                ObserverView::new(quorum.clone(), TimeoutPolicy::default()).with_tracing();
            for chunk in shuffled.chunks(rng.random_range(1..8)) {
                for b in chunk {
                    view.insert(b.clone(), scheme).map_err(|e| e.to_string())?;
                }
                view.interpret_all();
            }
            let permuted = serde_json::to_string(&view.report()).unwrap();
            ensure(reference == permuted, || {
                format!("dump {seed}: permuted insertion differs")
            })?;
        }
        positions += interpret_with(&dump.blocks, quorum, scheme).decided().len();
    }
    Ok(format!(
        "50 dumps x (2 repeats + 3 permutations) byte-identical, {positions} decided positions"
    ))
}

fn byte_fit(n: u32) -> Result<(f64, f64, f64), String> {
    let rounds = 12;
    let mut cfg = SimConfig::new(n, rounds, 1.0, 42);
    cfg.observers = Observers::None;
    cfg.max_round = Some(rounds);
    cfg.tx_load = TxLoad {
        rate: 4,
        payload_size: 32,
    };
    let mut sim = Simulation::new(cfg).map_err(|e| e.to_string())?;
    sim.run();
    let report = byte_account(&sim.dump(0), ByteModel::default());
    // Round 0 carries no references and the last round may be cut short.
    let fit = report.fit(1, rounds - 1).ok_or("empty window")?;
    Ok((fit.mean_reference_bytes, fit.ell, fit.c))
}

fn bytes() -> Result<String, String> {
    let (ref31, ell31, c31) = byte_fit(31)?;
    let target = ByteModel::default().formula(31, 0.0, 0.0);
    ensure((ref31 - target).abs() <= 0.05 * target, || {
        format!("N=31 reference bytes {ref31}, want {target} ± 5%")
    })?;
    let (_, ell7, c7) = byte_fit(7)?;
    let (_, ell16, c16) = byte_fit(16)?;
    let cs = [c7, c16, c31];
    let spread =
        cs.iter().cloned().fold(f64::MIN, f64::max) - cs.iter().cloned().fold(f64::MAX, f64::min);
    // Stable: the spread of c is under 5% of the smallest configuration's reference bytes.
    let tolerance = 0.05 * ByteModel::default().formula(7, 0.0, 0.0);
    ensure(spread <= tolerance, || {
        format!("c = {cs:?}, spread {spread} > {tolerance}")
    })?;
    Ok(format!(
        "N=31 reference bytes/round {ref31:.1} (formula {target}); ell = {ell7:.1}/{ell16:.1}/{ell31:.1}, c = {c7:.2}/{c16:.2}/{c31:.2} for N = 7/16/31"
    ))
}

fn latency_sweep() -> Result<String, String> {
    let cfg = SweepConfig::default();
    let rows = sweep(&cfg);
    for r in rows.iter().filter(|r| r.latency < cfg.block_interval) {
        ensure(
            r.failed_runs == 0 && r.min_rounds == 3.0 && r.max_rounds == 3.0,
            || format!("l={}: rounds {}..{}", r.latency, r.min_rounds, r.max_rounds),
        )?;
    }
    let region = increasing_region(&rows);
    let points: Vec<(f64, f64)> = region.iter().map(|r| (r.latency, r.mean_rounds)).collect();
    let fit = linear_fit(&points).ok_or("too few points in the increasing region")?;
    ensure(fit.r_squared >= 0.95, || {
        format!("R² = {:.3}", fit.r_squared)
    })?;
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("{}→{:.2}", r.latency, r.mean_rounds))
        .collect();
    Ok(format!(
        "[{}], slope {:.3}, R² {:.3} over {} points",
        table.join(" "),
        fit.slope,
        fit.r_squared,
        points.len()
    ))
}

fn x_run(n: u32, rounds: Round, max_round: Round) -> Result<Metrics, String> {
    let mut cfg = SimConfig::new(n, rounds, 1.0, 1);
    cfg.mode = Mode::X { heads: 2 };
    cfg.observers = Observers::None;
    cfg.max_round = Some(max_round);
    run(cfg).map_err(|e| e.to_string())
}

fn x_blockmania() -> Result<String, String> {
    let heads = 2.0;
    let mut medians = Vec::new();
    // Measured rounds and budget shrink with N so the 256-node run stays in seconds.
    for (n, rounds, budget) in [(16, 12, 30), (64, 12, 30), (256, 10, 24)] {
        let m = x_run(n, rounds, budget)?;
        let refs = m.bytes.references_per_block.ok_or("no blocks")?.max;
        ensure(refs <= heads + 1.0, || {
            format!("N={n}: {refs} references in one block")
        })?;
        let inc = m.inclusion.ok_or("no inclusion stats")?;
        ensure(inc.incomplete == 0, || {
            format!("N={n}: {} blocks never globally included", inc.incomplete)
        })?;
        medians.push((n, refs, inc.latency.ok_or("no latency")?.median));
    }
    let ratio = medians[2].2 / medians[0].2;
    ensure(ratio < 256.0 / 16.0, || format!("latency ratio {ratio}"))?;

    // Block hashes differ between the two DAGs, so values are compared by
    // outcome: Nil against Nil, or the block at the same position.
    let outcome = |v: &Value| if v.is_nil() { "nil" } else { "block" };
    let mut compared = 0;
    for seed in 0..4 {
        let mut x = SimConfig::new(16, 8, 1.0, seed);
        x.mode = Mode::X { heads: 2 };
        let mut xs = Simulation::new(x).map_err(|e| e.to_string())?;
        let mut bs =
            Simulation::new(SimConfig::new(16, 8, 1.0, seed)).map_err(|e| e.to_string())?;
        let (mx, mb) = (xs.run(), bs.run());
        ensure(mx.is_safe() && mb.is_safe(), || {
            format!("seed {seed}: unsafe run")
        })?;
        ensure(mx.completed && mb.completed, || {
            format!("seed {seed}: undecided positions")
        })?;
        for (n, xmap) in xs.decisions() {
            for (pos, d) in xmap {
                if let Some(value) = d.value.block() {
                    let block = xs
                        .view(n)
                        .store()
                        .get(&value)
                        .ok_or("decided block missing")?;
                    ensure(block.position() == *pos, || {
                        format!("seed {seed}: {pos} decided a block from elsewhere")
                    })?;
                }
            }
            for (_, bmap) in bs.decisions() {
                for (pos, d) in xmap.iter().filter(|(p, _)| bmap.contains_key(p)) {
                    let (a, b) = (outcome(&d.value), outcome(&bmap[pos].value));
                    ensure(a == b, || {
                        format!("seed {seed}: observer {n} decided {a} at {pos}, basic mode {b}")
                    })?;
                    compared += 1;
                }
            }
        }
    }
    let summary: Vec<String> = medians
        .iter()
        .map(|(n, r, l)| format!("N={n}: max refs {r}, median {l}"))
        .collect();
    Ok(format!(
        "{}; ratio {ratio:.2}; {compared} X/basic decision pairs agree",
        summary.join(", ")
    ))
}

/// Four nodes in lockstep; each block carries signed envelopes from `accounts`
/// plus one from an unknown account and one with an unaffordable fee.
fn ledger_dag(rounds: Round, keys: &AccountKeys, rng: &mut ChaCha8Rng) -> Vec<Block> {
    let scheme = MacScheme::default();
    let n = 4;
    let mut last: Vec<Option<BlockHash>> = vec![None; n];
    let mut blocks = Vec::new();
    for k in 0..rounds {
        let mut next = last.clone();
        for node in 0..n {
            let mut entries: Vec<Entry> = (0..n)
                .filter(|&m| m != node)
                .filter_map(|m| last[m])
                .map(Entry::Reference)
                .collect();
            for _ in 0..3 {
                let from = AccountId(rng.random_range(0..4));
                let kind = TxKind::Transfer {
                    to: AccountId(rng.random_range(0..4)),
                    amount: rng.random_range(0..400),
                };
                let fee = rng.random_range(1..50);
                entries.push(Entry::Transaction {
                    payload: TxEnvelope::signed(from, kind, fee, keys).encode(),
                    fee,
                });
            }
            let stranger = TxEnvelope::signed(
                AccountId(99),
                TxKind::Opaque {
                    data: vec![k as u8],
                },
                5,
                keys,
            );
            entries.push(Entry::Transaction {
                payload: stranger.encode(),
                fee: 5,
            });
            let whale = TxEnvelope::signed(
                AccountId(node as u64),
                TxKind::Opaque { data: vec![1] },
                u64::MAX / 2,
                keys,
            );
            entries.push(Entry::Transaction {
                payload: whale.encode(),
                fee: u64::MAX / 2,
            });
            let b = Block::unsigned(node as NodeId, k, last[node], entries).sign_with(&scheme);
            next[node] = Some(b.hash());
            blocks.push(b);
        }
        last = next;
    }
    blocks
}

fn ordered_ledger(view: &ObserverView, rounds: Round) -> Vec<OrderedTx> {
    let mut seq = Sequencer::new(Tiebreak::Fee);
    let mut out = Vec::new();
    for k in 0..rounds {
        let Some(decided) = view.round_decided(k) else {
            break;
        };
        out.extend(
            seq.push_round(&decided, view.store())
                .expect("decided blocks are stored"),
        );
    }
    out
}

fn ordering() -> Result<String, String> {
    let keys = AccountKeys::new(b"acceptance");
    let genesis = Ledger::with_balances((0..4).map(|a| (AccountId(a), 1_000)));
    let mut total_txs = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = ledger_dag(9, &keys, &mut rng);
        let quorum = QuorumConfig::unweighted(4).unwrap();
        let first = interpret(&blocks, quorum.clone());
        let mut shuffled = blocks.clone();
        shuffled.shuffle(&mut rng);
        let second = interpret(&shuffled, quorum);

        let order = ordered_ledger(&first, 9);
        ensure(order == ordered_ledger(&second, 9), || {
            format!("seed {seed}: observers ordered differently")
        })?;
        ensure(!order.is_empty(), || {
            format!("seed {seed}: nothing ordered")
        })?;
        for w in order.windows(2) {
            let (a, b) = (&w[0].key, &w[1].key);
            ensure(a.round <= b.round, || {
                format!("seed {seed}: round {} after {}", b.round, a.round)
            })?;
            ensure(a.round != b.round || a.fee >= b.fee, || {
                format!("seed {seed}: fee {} before {}", a.fee, b.fee)
            })?;
        }

        let ex_a = execute(&genesis, &order, &keys);
        let ex_b = execute(&genesis, &ordered_ledger(&second, 9), &keys);
        ensure(ex_a == ex_b, || {
            format!("seed {seed}: replicated ledgers differ")
        })?;
        ensure(
            u128::from(ex_a.fees_collected) + ex_a.ledger.total() == genesis.total(),
            || format!("seed {seed}: value not conserved"),
        )?;
        for (tx, (_, receipt)) in order.iter().zip(&ex_a.receipts) {
            let env = TxEnvelope::decode(&tx.payload).unwrap();
            if env.account == AccountId(99) {
                ensure(
                    *receipt
                        == Receipt::NoOp {
                            reason: NoOpReason::UnknownAccount,
                        },
                    || format!("{receipt:?}"),
                )?;
            }
            if tx.fee() == u64::MAX / 2 {
                ensure(
                    *receipt
                        == Receipt::NoOp {
                            reason: NoOpReason::InsufficientFunds,
                        },
                    || format!("{receipt:?}"),
                )?;
            }
        }
        total_txs += order.len();
    }
    Ok(format!("20 seeded DAGs, {total_txs} ordered transactions: fee/round monotone, replicated ledgers equal, no-ops as expected"))
}

fn stake() -> Result<String, String> {
    let r = 10;
    let epoch = EpochConfig::new(r, 0).unwrap();
    let stake = resolve_weights(
        BTreeMap::from([(0, 300), (1, 100), (2, 200), (3, 400)]),
        BTreeMap::new(),
    );
    let nils = [
        Position::new(1, 2),
        Position::new(1, 5),
        Position::new(1, 7),
    ];
    let mut decisions = BTreeMap::new();
    for k in epoch.rounds() {
        for n in 0..4 {
            let p = Position::new(n, k);
            let v = if nils.contains(&p) {
                Value::Nil
            } else {
                Value::Block(BlockHash([n as u8; 32]))
            };
            decisions.insert(p, v);
        }
    }
    let fees = 10_007;
    let out = epoch_close(
        &stake,
        &epoch,
        4,
        &decisions,
        &BTreeSet::from([3]),
        fees,
        &[],
    )
    .map_err(|e| e.to_string())?;
    ensure(out.slashed.get(&1) == Some(&(100 / r * 3)), || {
        format!("nil slash {:?}", out.slashed.get(&1))
    })?;
    ensure(out.slashed.get(&3) == Some(&400), || {
        format!("equivocation slash {:?}", out.slashed.get(&3))
    })?;
    let paid_fees: u64 = out.payouts.values().map(|p| p.fees).sum();
    ensure(paid_fees + out.undistributed_fees == fees, || {
        format!("fees {paid_fees} of {fees}")
    })?;
    let paid_slash: u64 = out.payouts.values().map(|p| p.slashing).sum();
    let before: u64 = stake.locked.values().sum();
    let after: u64 = out.next.locked.values().sum();
    ensure(
        after + paid_slash + out.undistributed_slash == before,
        || "stake not conserved".into(),
    )?;
    // Fee shares follow decided blocks × weight: node 0 has 10·300, node 1 7·100, node 2 10·200.
    let share = |n: NodeId| out.payouts.get(&n).map_or(0, |p| p.fees);
    let expected_1 = fees * 700 / 5700;
    ensure(share(1) == expected_1 && share(3) == 0, || {
        format!("fee shares {:?}", out.payouts)
    })?;

    let equal = BTreeMap::from([(0, 25), (1, 25), (2, 25), (3, 25)]);
    for silent in [BTreeSet::new(), BTreeSet::from([3])] {
        let blocks = lockstep(4, 17, &silent, &MacScheme::default());
        let plain = interpret(&blocks, QuorumConfig::unweighted(4).unwrap()).report();
        let weighted =
            interpret(&blocks, QuorumConfig::weighted(4, equal.clone()).unwrap()).report();
        ensure(plain.decided == weighted.decided, || {
            "weighted lockstep decisions differ".into()
        })?;
    }
    let mut cfg = SimConfig::new(4, 10, 1.0, 13);
    let plain = run(cfg.clone()).map_err(|e| e.to_string())?;
    cfg.weights = Some(equal);
    let weighted = run(cfg).map_err(|e| e.to_string())?;
    ensure(plain.positions == weighted.positions, || {
        "weighted simulation decisions differ".into()
    })?;
    Ok(format!(
        "nil slash {} (= 3·100/{r}), equivocator slash 400, {fees} fees fully paid, stake conserved; equal weights reproduce unweighted runs",
        out.slashed[&1]
    ))
}

#[test]
fn criterion_01_steady_state_three_rounds() {
    report(1, steady_state());
}

#[test]
fn criterion_02_view_change_trace() {
    report(2, view_change());
}

#[test]
fn criterion_03_safety_under_adversaries() {
    report(3, safety());
}

#[test]
fn criterion_04_interpretation_determinism() {
    report(4, determinism());
}

#[test]
fn criterion_05_byte_accounting() {
    report(5, bytes());
}

#[test]
fn criterion_06_latency_sweep_is_linear() {
    report(6, latency_sweep());
}

#[test]
fn criterion_07_x_mode_scaling() {
    report(7, x_blockmania());
}

#[test]
fn criterion_08_ordering_and_ledger() {
    report(8, ordering());
}

#[test]
fn criterion_09_stake_epochs() {
    report(9, stake());
}

#[test]
fn criterion_10_hardware_throughput_out_of_scope() {
    println!("criterion 10: SKIP  throughput on real hardware and TCP is not reproducible here; covered by 3-7");
}
