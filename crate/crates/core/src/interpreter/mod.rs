//! Reading an observer's block DAG as one broadcast instance per position.

mod observer;
mod state;
mod timeout;

pub use observer::{
    BlockTrace, Decision, DecisionConflict, DecisionEntry, DecisionRecord, InterpretReport,
    MachineSnapshot, ObserverView,
};
pub use state::BlockState;
pub use timeout::{compute_timeout, view_timeout, TimeoutPolicy};

#[cfg(test)]
mod tests;
