//! Block DAG consensus: nodes gossip blocks under weak validity rules and
//! every observer derives per-position agreement by interpreting the DAG.

pub mod block_dag;
pub mod fixtures;
pub mod interpreter;
pub mod ordering;
pub mod simnet;
pub mod stake;
pub mod trb;
pub mod xblockmania;
