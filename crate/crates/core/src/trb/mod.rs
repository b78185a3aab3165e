//! Terminating reliable broadcast for a single position.

mod machine;
mod quorum;

pub use machine::{MachineLog, MessageKind, StepOutcome, TrbMachine, TrbMessage, Value, View};
pub use quorum::{QuorumConfig, QuorumError, Tally, Thresholds};
