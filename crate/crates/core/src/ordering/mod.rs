//! Total order of transactions from decided rounds, and fee-paying execution.

mod ledger;
mod sequence;
mod tx;

pub use ledger::{execute, Execution, Ledger, NoOpReason, Receipt, SealedStakeOp};
pub use sequence::{
    order_round, order_round_hashcash, BlockSource, OrderKey, OrderedTx, OrderingError, Sequencer,
    Tiebreak,
};
pub use tx::{
    fee_binding, AccountId, AccountKeys, EnvelopeError, FeeAuthorization, TxDigest, TxEnvelope,
    TxKind,
};
