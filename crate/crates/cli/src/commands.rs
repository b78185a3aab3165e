use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use blockmania::block_dag::{
    Block, BlockHash, DagDump, DagStore, EquivocationEvidence, InvalidReason, MacScheme, NoVerify,
    NodeId, Position, Round, SignatureScheme,
};
use blockmania::interpreter::{ObserverView, TimeoutPolicy};
use blockmania::ordering::{
    execute, AccountKeys, Execution, Ledger, OrderedTx, SealedStakeOp, Sequencer, Tiebreak,
};
use blockmania::simnet::{
    increasing_region, linear_fit, node_keys, parse_assignment, LinearFit, Metrics, Simulation,
    SweepConfig, SweepRow,
};
use blockmania::stake::{
    epoch_close as close_epoch, resolve_weights, EpochConfig, EpochOutcome, StakeState,
};
use blockmania::trb::{QuorumConfig, Value};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{ScenarioError, ScenarioFile, SCENARIO_VERSION};
use crate::{
    EpochCloseArgs, InterpretArgs, KeyArgs, ModeArg, OrderArgs, SimulateArgs, SweepArgs,
    TableFormat, TiebreakArg, VerifyArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Invalid(String),
}

pub enum Outcome {
    Clean,
    SafetyViolation(String),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Input {
        path: path.into(),
        message: e.to_string(),
    })
}

fn read_dump(path: &Path) -> Result<DagDump, CliError> {
    DagDump::parse(&read(path)?).map_err(|e| CliError::Input {
        path: path.into(),
        message: e.to_string(),
    })
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io {
            path: p.into(),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

fn keys(args: &KeyArgs) -> Result<Box<dyn SignatureScheme>, CliError> {
    match args.keys.as_str() {
        "none" => Ok(Box::new(NoVerify)),
        "default" => Ok(Box::new(MacScheme::default())),
        other => other
            .strip_prefix("sim:")
            .and_then(|s| s.parse().ok())
            .map(|seed| Box::new(node_keys(seed)) as Box<dyn SignatureScheme>)
            .ok_or_else(|| {
                CliError::Invalid(format!(
                    "--keys: expected none, default or sim:<seed>, got `{other}`"
                ))
            }),
    }
}

/// The `decided` list of `interpret` output; everything else in the file is ignored.
#[derive(Deserialize)]
struct DecisionsFile {
    decided: Vec<DecidedEntry>,
}

#[derive(Deserialize)]
struct DecidedEntry {
    position: Position,
    value: Value,
}

fn read_decisions(path: &Path) -> Result<BTreeMap<Position, Value>, CliError> {
    let file: DecisionsFile = read_json(path)?;
    Ok(file
        .decided
        .into_iter()
        .map(|d| (d.position, d.value))
        .collect())
}

#[derive(Serialize)]
struct SimulateReport {
    scenario: ScenarioFile,
    metrics: Metrics,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    epochs: Vec<EpochOutcome>,
}

#[derive(Serialize)]
struct PositionRow {
    position_node: NodeId,
    position_round: Round,
    decision: String,
    decision_round: Option<Round>,
    decision_tick: Option<f64>,
}

fn build_scenario(args: &SimulateArgs) -> Result<ScenarioFile, CliError> {
    let mut s = match &args.scenario {
        Some(path) => ScenarioFile::parse(&read(path)?).map_err(|e| CliError::Input {
            path: path.clone(),
            message: e.to_string(),
        })?,
        None => ScenarioFile::parse(&format!(
            "version = {SCENARIO_VERSION}\nn = 4\nrounds = 20\nlatency = 1.0\n"
        ))?,
    };
    macro_rules! set {
        ($($field:ident => $target:expr),* $(,)?) => {
            $(if let Some(v) = args.$field { $target = v.into(); })*
        };
    }
    set!(n => s.n, rounds => s.rounds, interval => s.interval, latency => s.latency,
         jitter_mean_frac => s.jitter_mean_frac, seed => s.seed, tx_rate => s.tx_rate, tx_size => s.tx_size);
    if args.f.is_some() {
        s.f = args.f;
    }
    if args.max_round.is_some() {
        s.max_round = args.max_round;
    }
    if args.x.is_some() {
        s.x = args.x;
    }
    if let Some(mode) = args.mode {
        s.mode = match mode {
            ModeArg::Basic => "basic",
            ModeArg::X => "x",
        }
        .into();
    }
    for spec in &args.adversaries {
        let (node, behavior) =
            parse_assignment(spec).map_err(|e| CliError::Invalid(format!("--adversary: {e}")))?;
        s.adversaries.insert(node.to_string(), behavior.to_string());
    }
    Ok(s)
}

/// Closes every epoch that ends within the measured rounds, starting from the scenario weights.
fn settle_epochs(
    sim: &Simulation,
    weights: &BTreeMap<NodeId, u64>,
    rounds_per_epoch: u64,
) -> Result<Vec<EpochOutcome>, CliError> {
    let cfg = sim.config();
    let Some(observer) = cfg.honest_nodes().find(|&n| cfg.observes(n)) else {
        return Ok(Vec::new());
    };
    let view = sim.view(observer);
    let decisions: BTreeMap<Position, Value> =
        view.decided().iter().map(|(p, d)| (*p, d.value)).collect();
    let equivocators = view.store().equivocators().clone();
    let mut stake = resolve_weights(weights.clone(), BTreeMap::new());
    let mut epoch = EpochConfig::new(rounds_per_epoch, 0)
        .map_err(|e| CliError::Invalid(format!("stake: {e}")))?;
    let mut out = Vec::new();
    while epoch.rounds().end <= cfg.rounds {
        let outcome = close_epoch(
            &stake,
            &epoch,
            cfg.n_nodes,
            &decisions,
            &equivocators,
            0,
            &[],
        )
        .map_err(|e| CliError::Invalid(format!("epoch {}: {e}", epoch.epoch)))?;
        stake = outcome.next.clone();
        out.push(outcome);
        epoch = epoch.next();
    }
    Ok(out)
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    let scenario = build_scenario(args)?;
    let cfg = scenario.to_config()?;
    let mut resolved = ScenarioFile::from_config(&cfg);
    if let (Some(out), Some(given)) = (resolved.stake.as_mut(), scenario.stake.as_ref()) {
        out.rounds_per_epoch = given.rounds_per_epoch;
    }
    if let Some(path) = &args.emit_scenario {
        fs::write(path, resolved.to_toml()).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    let mut sim = Simulation::new(cfg.clone()).map_err(|e| CliError::Invalid(e.to_string()))?;
    let metrics = sim.run();

    if let Some(dir) = &args.dump_dags {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.clone(),
            source,
        })?;
        for n in 0..cfg.n_nodes {
            let path = dir.join(format!("node-{n}.dag"));
            fs::write(&path, sim.dump(n).to_text())
                .map_err(|source| CliError::Io { path, source })?;
        }
    }

    let epochs = match (
        &cfg.weights,
        scenario.stake.as_ref().and_then(|s| s.rounds_per_epoch),
    ) {
        (Some(w), Some(r)) => settle_epochs(&sim, w, r)?,
        _ => Vec::new(),
    };

    let csv_out = args
        .out_metrics
        .as_ref()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"));
    if let Some(path) = csv_out {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Input {
            path: path.clone(),
            message: e.to_string(),
        })?;
        for p in &metrics.positions {
            w.serialize(PositionRow {
                position_node: p.position.node,
                position_round: p.position.round,
                decision: p.decision.map(|v| v.to_string()).unwrap_or_default(),
                decision_round: p.decision_round,
                decision_tick: p.decision_tick,
            })
            .map_err(|e| CliError::Input {
                path: path.clone(),
                message: e.to_string(),
            })?;
        }
        w.flush().map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    } else {
        let report = SimulateReport {
            scenario: resolved,
            metrics: metrics.clone(),
            epochs,
        };
        write_out(args.out_metrics.as_deref(), &json(&report))?;
    }

    match metrics.safety_violations.first() {
        Some(v) => Ok(Outcome::SafetyViolation(format!(
            "{} decided {} at node {} but {} at node {}",
            v.position, v.value_a, v.observer_a, v.value_b, v.observer_b
        ))),
        None => Ok(Outcome::Clean),
    }
}

#[derive(Serialize)]
struct SweepReport {
    config: SweepConfig,
    rows: Vec<SweepRow>,
    fit: Option<LinearFit>,
}

pub fn sweep(args: &SweepArgs) -> Result<Outcome, CliError> {
    let cfg = SweepConfig {
        n_nodes: args.n,
        rounds: args.rounds,
        warmup: args.warmup,
        block_interval: args.interval,
        jitter_mean_frac: args.jitter_mean_frac,
        latencies: args.latencies.clone(),
        seeds: args.seeds,
        base_seed: args.base_seed,
    };
    if cfg.latencies.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(CliError::Invalid("--latencies must be non-negative".into()));
    }
    if !(cfg.block_interval.is_finite() && cfg.block_interval > 0.0)
        || cfg.seeds == 0
        || cfg.rounds <= cfg.warmup
    {
        return Err(CliError::Invalid(
            "need a positive interval, at least one seed, and rounds > warmup".into(),
        ));
    }
    let rows = blockmania::simnet::sweep(&cfg);
    let points: Vec<(f64, f64)> = increasing_region(&rows)
        .iter()
        .map(|r| (r.latency, r.mean_rounds))
        .collect();
    let fit = linear_fit(&points);
    let text = match args.format {
        TableFormat::Json => json(&SweepReport {
            config: cfg,
            rows,
            fit,
        }),
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)
                    .map_err(|e| CliError::Invalid(e.to_string()))?;
            }
            String::from_utf8(
                w.into_inner()
                    .map_err(|e| CliError::Invalid(e.to_string()))?,
            )
            .expect("csv output is utf-8")
        }
    };
    write_out(args.out.as_deref(), &text)?;
    Ok(Outcome::Clean)
}

#[derive(Serialize)]
struct RejectedBlock {
    hash: BlockHash,
    node: NodeId,
    round: Round,
    #[serde(flatten)]
    reason: InvalidReason,
}

#[derive(Serialize)]
struct VerifyReport {
    n_nodes: u32,
    f: u32,
    blocks: usize,
    valid: usize,
    /// Blocks still waiting on references absent from the dump.
    pending: Vec<BlockHash>,
    rejected: Vec<RejectedBlock>,
    equivocations: Vec<EquivocationEvidence>,
    equivocators: BTreeSet<NodeId>,
    heads: Vec<BlockHash>,
}

pub fn verify(args: &VerifyArgs) -> Result<Outcome, CliError> {
    let dump = read_dump(&args.dag)?;
    let scheme = keys(&args.keys)?;
    let mut store = DagStore::new();
    for b in &dump.blocks {
        // Rejections are part of the report, not failures.
        let _ = store.insert(b.clone(), scheme.as_ref());
    }
    let mut pending = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = BTreeSet::new();
    for b in &dump.blocks {
        let h = b.hash();
        if !seen.insert(h) {
            continue;
        }
        if store.is_pending(&h) {
            pending.push(h);
        } else if let Some(reason) = store.rejected(&h) {
            rejected.push(RejectedBlock {
                hash: h,
                node: b.node,
                round: b.round,
                reason: reason.clone(),
            });
        }
    }
    let report = VerifyReport {
        n_nodes: dump.n_nodes,
        f: dump.f,
        blocks: dump.blocks.len(),
        valid: store.valid_count(),
        pending,
        rejected,
        equivocations: store.evidence().to_vec(),
        equivocators: store.equivocators().clone(),
        heads: store.heads(),
    };
    write_out(args.out.as_deref(), &json(&report))?;
    Ok(Outcome::Clean)
}

pub fn interpret(args: &InterpretArgs) -> Result<Outcome, CliError> {
    let dump = read_dump(&args.dag)?;
    let n = args.n.unwrap_or(dump.n_nodes);
    let f = args.f.unwrap_or(dump.f);
    let quorum = match &args.weights {
        Some(path) => {
            let w: BTreeMap<NodeId, u64> = read_json(path)?;
            QuorumConfig::weighted(n, w)
        }
        None => QuorumConfig::with_faults(n, f),
    }
    .map_err(|e| CliError::Invalid(format!("quorum: {e}")))?;
    let policy = TimeoutPolicy {
        c: args.timeout_c,
        ..TimeoutPolicy::default()
    };
    let scheme = keys(&args.keys)?;
    let mut view = ObserverView::new(quorum, policy).with_tracing();
    for b in dump.blocks {
        let _ = view.insert(b, scheme.as_ref());
    }
    view.interpret_all();
    let report = view.report();
    write_out(args.out.as_deref(), &json(&report))?;
    match report.conflicts.first() {
        Some(c) => Ok(Outcome::SafetyViolation(format!(
            "{} decided both {} and {}",
            c.position, c.first, c.second
        ))),
        None => Ok(Outcome::Clean),
    }
}

#[derive(Serialize)]
struct OrderReport {
    rounds_ordered: Round,
    transactions: Vec<OrderedTx>,
    execution: Execution,
}

pub fn order(args: &OrderArgs) -> Result<Outcome, CliError> {
    let decided = read_decisions(&args.decisions)?;
    let dump = read_dump(&args.dag)?;
    let ledger: Ledger = read_json(&args.ledger)?;
    let keys = args
        .account_keys
        .as_ref()
        .map_or_else(AccountKeys::default, |s| AccountKeys::new(s.as_bytes()));
    let blocks: HashMap<BlockHash, Block> =
        dump.blocks.into_iter().map(|b| (b.hash(), b)).collect();

    let mut by_round: BTreeMap<Round, BTreeMap<NodeId, Value>> = BTreeMap::new();
    for (pos, v) in decided {
        by_round.entry(pos.round).or_default().insert(pos.node, v);
    }
    let mut seq = Sequencer::new(match args.tiebreak {
        TiebreakArg::Fee => Tiebreak::Fee,
        TiebreakArg::Hash => Tiebreak::Hash,
    });
    let mut transactions = Vec::new();
    // Rounds are ordered only while every position of the round is decided.
    while let Some(round) = by_round
        .get(&seq.next_round())
        .filter(|r| r.len() == dump.n_nodes as usize)
    {
        let txs = seq
            .push_round(round, &blocks)
            .map_err(|e| CliError::Input {
                path: args.dag.clone(),
                message: e.to_string(),
            })?;
        transactions.extend(txs);
    }
    let execution = execute(&ledger, &transactions, &keys);
    let report = OrderReport {
        rounds_ordered: seq.next_round(),
        transactions,
        execution,
    };
    write_out(args.out.as_deref(), &json(&report))?;
    Ok(Outcome::Clean)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StakeInput {
    locked: BTreeMap<NodeId, u64>,
    #[serde(default)]
    delegations: BTreeMap<NodeId, NodeId>,
    #[serde(default)]
    unlocking: BTreeSet<NodeId>,
}

pub fn epoch_close(args: &EpochCloseArgs) -> Result<Outcome, CliError> {
    let input: StakeInput = read_json(&args.stake)?;
    let mut stake: StakeState = resolve_weights(input.locked, input.delegations);
    stake.unlocking = input.unlocking;
    let decisions = read_decisions(&args.decisions)?;
    let sealed: Vec<SealedStakeOp> = match &args.sealed {
        Some(p) => read_json(p)?,
        None => Vec::new(),
    };
    let epoch = EpochConfig::new(args.rounds_per_epoch, args.epoch)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let equivocators: BTreeSet<NodeId> = args.equivocators.iter().copied().collect();
    let outcome = close_epoch(
        &stake,
        &epoch,
        args.n,
        &decisions,
        &equivocators,
        args.fees,
        &sealed,
    )
    .map_err(|e| CliError::Invalid(e.to_string()))?;
    write_out(args.out.as_deref(), &json(&outcome))?;
    Ok(Outcome::Clean)
}
