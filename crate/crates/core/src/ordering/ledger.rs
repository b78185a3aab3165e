use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sequence::OrderedTx;
use super::tx::{AccountId, AccountKeys, TxDigest, TxEnvelope, TxKind};
use crate::stake::StakeOp;

/// Replicated account balances.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub accounts: BTreeMap<AccountId, u64>,
}

impl Ledger {
    pub fn with_balances(balances: impl IntoIterator<Item = (AccountId, u64)>) -> Self {
        Self {
            accounts: balances.into_iter().collect(),
        }
    }

    pub fn balance(&self, account: AccountId) -> Option<u64> {
        self.accounts.get(&account).copied()
    }

    pub fn total(&self) -> u128 {
        self.accounts.values().map(|&b| u128::from(b)).sum()
    }

    pub fn credit(&mut self, account: AccountId, amount: u64) {
        *self.accounts.entry(account).or_insert(0) += amount;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoOpReason {
    Malformed,
    BadAuthorization,
    UnknownAccount,
    InsufficientFunds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Receipt {
    Executed {
        fee: u64,
    },
    /// The fee was paid but the operation itself could not be applied.
    FeeOnly {
        fee: u64,
        reason: NoOpReason,
    },
    NoOp {
        reason: NoOpReason,
    },
}

/// A stake operation that passed fee payment, for processing at epoch close.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedStakeOp {
    pub account: AccountId,
    pub op: StakeOp,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub ledger: Ledger,
    pub receipts: Vec<(TxDigest, Receipt)>,
    pub fees_collected: u64,
    /// Balance moved out of accounts into stake locks.
    pub escrowed: u64,
    pub stake_ops: Vec<SealedStakeOp>,
}

/// Applies `txs` in order. Every transaction gets a receipt; those that cannot
/// pay their fee leave the ledger untouched.
pub fn execute(ledger: &Ledger, txs: &[OrderedTx], keys: &AccountKeys) -> Execution {
    let mut ex = Execution {
        ledger: ledger.clone(),
        ..Default::default()
    };
    for tx in txs {
        let receipt = apply(&mut ex, tx, keys);
        ex.receipts.push((tx.digest(), receipt));
    }
    ex
}

fn apply(ex: &mut Execution, tx: &OrderedTx, keys: &AccountKeys) -> Receipt {
    let noop = |reason| Receipt::NoOp { reason };
    let Ok(env) = TxEnvelope::decode(&tx.payload) else {
        return noop(NoOpReason::Malformed);
    };
    let fee = tx.fee();
    let auth = env.fee_authorization(fee);
    if !auth.verify(keys) {
        return noop(NoOpReason::BadAuthorization);
    }
    let Some(balance) = ex.ledger.accounts.get_mut(&env.account) else {
        return noop(NoOpReason::UnknownAccount);
    };
    if *balance < fee {
        return noop(NoOpReason::InsufficientFunds);
    }
    *balance -= fee;
    ex.fees_collected += fee;
    let short = Receipt::FeeOnly {
        fee,
        reason: NoOpReason::InsufficientFunds,
    };
    match env.kind {
        TxKind::Opaque { .. } => {}
        TxKind::Transfer { to, amount } => {
            if *balance < amount {
                return short;
            }
            *balance -= amount;
            ex.ledger.credit(to, amount);
        }
        TxKind::Stake { op } => {
            if let StakeOp::Lock { amount, .. } = op {
                if *balance < amount {
                    return short;
                }
                *balance -= amount;
                ex.escrowed += amount;
            }
            ex.stake_ops.push(SealedStakeOp {
                account: env.account,
                op,
            });
        }
    }
    Receipt::Executed { fee }
}
