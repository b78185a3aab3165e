//! Deterministic discrete-event simulation of a block-gossip network running
//! the protocol, with byzantine behaviors and latency/byte measurements.

mod batch;
mod bytes;
mod client_load;
mod config;
mod engine;
mod metrics;
mod sweep;

pub use batch::{map_runs, run_many, run_many_sequential};
pub use bytes::{
    byte_account, byte_account_blocks, BlockBytes, ByteModel, ByteReport, FormulaFit, RoundBytes,
};
pub use client_load::{client_load, ClientLoad, FEE_RANGE};
pub use config::{
    parse_assignment, AdversaryBehavior, AsyncPeriod, ConfigError, LatencyModel, Mode, Observers,
    SimConfig, TxLoad,
};
pub use engine::{node_keys, run, Simulation};
pub use metrics::{ByteSummary, InclusionStats, Metrics, PositionMetric, SafetyViolation, Summary};
pub use sweep::{
    increasing_region, linear_fit, sweep, LinearFit, SweepConfig, SweepRow, DEFAULT_GRID,
};
