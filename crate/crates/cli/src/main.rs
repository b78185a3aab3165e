mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{CliError, Outcome};

#[derive(Parser, Debug)]
#[command(
    name = "blockmania",
    version,
    about = "Block DAG consensus: simulate, interpret, order and settle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulated network and report per-position decisions.
    Simulate(SimulateArgs),
    /// Rounds-to-decision against network latency.
    Sweep(SweepArgs),
    /// Validity and equivocation report for a DAG dump.
    Verify(VerifyArgs),
    /// Interpret a DAG dump: decided map and per-block machine traces.
    Interpret(InterpretArgs),
    /// Order decided transactions and apply them to a ledger.
    Order(OrderArgs),
    /// Close a stake epoch: slashing, fee payout, next weights.
    EpochClose(EpochCloseArgs),
}

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    /// TOML scenario; flags given alongside override its values.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<u32>,
    /// Fault bound; defaults to (n-1)/3.
    #[arg(long)]
    pub f: Option<u32>,
    /// Positions below this round must be decided.
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Hard cap on emitted rounds; defaults to rounds + 100.
    #[arg(long)]
    pub max_round: Option<u64>,
    /// Ticks between a node's blocks.
    #[arg(long)]
    pub interval: Option<f64>,
    /// Base one-way latency in ticks.
    #[arg(long)]
    pub latency: Option<f64>,
    /// Mean exponential jitter as a fraction of the latency.
    #[arg(long)]
    pub jitter_mean_frac: Option<f64>,
    /// `<node>=<behavior>`: honest, silent[:round], equivocator:a+b, delayer:ticks, arbitrary:seed. Repeatable.
    #[arg(long = "adversary")]
    pub adversaries: Vec<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Heads referenced per block in x mode.
    #[arg(long)]
    pub x: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Transactions per node per round.
    #[arg(long)]
    pub tx_rate: Option<u32>,
    /// Payload bytes per transaction.
    #[arg(long)]
    pub tx_size: Option<u32>,
    /// Metrics destination: `.csv` gets one row per position, anything else JSON. Defaults to JSON on stdout.
    #[arg(long)]
    pub out_metrics: Option<PathBuf>,
    /// Write every node's DAG to `<dir>/node-<n>.dag`.
    #[arg(long)]
    pub dump_dags: Option<PathBuf>,
    /// Write the fully resolved scenario, defaults included, as TOML.
    #[arg(long)]
    pub emit_scenario: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Basic,
    X,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 4)]
    pub n: u32,
    #[arg(long, default_value_t = 40)]
    pub rounds: u64,
    /// Positions below this round are left out of the averages.
    #[arg(long, default_value_t = 10)]
    pub warmup: u64,
    #[arg(long, default_value_t = 2.0)]
    pub interval: f64,
    #[arg(long, default_value_t = 0.1)]
    pub jitter_mean_frac: f64,
    /// Comma-separated latency grid.
    #[arg(long, value_delimiter = ',', default_values_t = blockmania::simnet::DEFAULT_GRID.to_vec())]
    pub latencies: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub base_seed: u64,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

/// Which keys block signatures are checked against: `none`, `default`
/// (the fixture keys) or `sim:<seed>` (keys of a simulation run with that seed).
#[derive(Args, Debug)]
pub struct KeyArgs {
    #[arg(long, default_value = "none")]
    pub keys: String,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub dag: PathBuf,
    #[command(flatten)]
    pub keys: KeyArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InterpretArgs {
    #[arg(long)]
    pub dag: PathBuf,
    /// Overrides the dump header.
    #[arg(long)]
    pub n: Option<u32>,
    /// Overrides the dump header.
    #[arg(long)]
    pub f: Option<u32>,
    /// JSON object of node id to stake weight; switches to the weighted quorum.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub timeout_c: u64,
    #[command(flatten)]
    pub keys: KeyArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OrderArgs {
    /// Output of `interpret`.
    #[arg(long)]
    pub decisions: PathBuf,
    #[arg(long)]
    pub dag: PathBuf,
    #[arg(long, value_enum, default_value_t = TiebreakArg::Fee)]
    pub tiebreak: TiebreakArg,
    /// Starting ledger as `{"accounts": {"<id>": balance}}`.
    #[arg(long)]
    pub ledger: PathBuf,
    /// Seed for the account signature keys.
    #[arg(long)]
    pub account_keys: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TiebreakArg {
    Fee,
    Hash,
}

#[derive(Args, Debug)]
pub struct EpochCloseArgs {
    /// `{"locked": {...}, "delegations": {...}, "unlocking": [...]}`.
    #[arg(long)]
    pub stake: PathBuf,
    /// Output of `interpret`.
    #[arg(long)]
    pub decisions: PathBuf,
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub rounds_per_epoch: u64,
    #[arg(long, default_value_t = 0)]
    pub epoch: u64,
    #[arg(long, default_value_t = 0)]
    pub fees: u64,
    /// Comma-separated node ids with equivocation evidence.
    #[arg(long, value_delimiter = ',')]
    pub equivocators: Vec<u32>,
    /// JSON list of sealed stake operations from `order`.
    #[arg(long)]
    pub sealed: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Interpret(a) => commands::interpret(&a),
        Command::Order(a) => commands::order(&a),
        Command::EpochClose(a) => commands::epoch_close(&a),
    };
    match result {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::SafetyViolation(what)) => {
            eprintln!("safety violation: {what}");
            ExitCode::from(2)
        }
        Err(e @ CliError::Io { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
