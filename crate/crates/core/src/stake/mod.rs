//! Epoch-based delegated stake: weights, weighted quorums, slashing and payouts.

mod epoch;
mod weights;

pub use epoch::{epoch_close, split_proportional, EpochConfig, EpochOutcome, Payout, StakeError};
pub use weights::{resolve_weights, weighted_quorum, StakeOp, StakeState};
