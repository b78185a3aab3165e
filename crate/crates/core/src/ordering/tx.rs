use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::block_dag::NodeId;
use crate::stake::StakeOp;

/// Identifies an account by (a stand-in for) its public signature key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub u64);

impl AccountId {
    /// The account that receives a node's payouts and unlocked stake.
    pub fn of_node(node: NodeId) -> Self {
        AccountId(u64::from(node))
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Digest of a transaction entry (payload and fee); the ordering tie-breaker and dedup key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxDigest(pub [u8; 32]);

impl TxDigest {
    pub fn of(payload: &[u8], fee: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"blockmania/tx/v1");
        h.update(fee.to_le_bytes());
        h.update(payload);
        TxDigest(h.finalize().into())
    }
}

impl fmt::Debug for TxDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tx#{}", &hex::encode(self.0)[..8])
    }
}

impl fmt::Display for TxDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for TxDigest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TxDigest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(TxDigest(out))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TxKind {
    Opaque { data: Vec<u8> },
    Transfer { to: AccountId, amount: u64 },
    Stake { op: StakeOp },
}

/// The structured content of a transaction payload: who pays the fee, what
/// to do, and the fee authorization signature.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxEnvelope {
    pub account: AccountId,
    pub kind: TxKind,
    pub sig: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("payload does not start with the envelope magic")]
    NotAnEnvelope,
    #[error("payload truncated")]
    Truncated,
    #[error("unknown transaction kind tag {0}")]
    BadKind(u8),
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
}

const MAGIC: &[u8; 4] = b"BMTX";

impl TxKind {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            TxKind::Opaque { data } => {
                out.push(0);
                out.extend((data.len() as u32).to_le_bytes());
                out.extend(data);
            }
            TxKind::Transfer { to, amount } => {
                out.push(1);
                out.extend(to.0.to_le_bytes());
                out.extend(amount.to_le_bytes());
            }
            TxKind::Stake {
                op: StakeOp::Lock { node, amount },
            } => {
                out.push(2);
                out.extend(node.to_le_bytes());
                out.extend(amount.to_le_bytes());
            }
            TxKind::Stake {
                op: StakeOp::Delegate { node, to },
            } => {
                out.push(3);
                out.extend(node.to_le_bytes());
                out.extend(to.to_le_bytes());
            }
            TxKind::Stake {
                op: StakeOp::Unlock { node },
            } => {
                out.push(4);
                out.extend(node.to_le_bytes());
            }
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], EnvelopeError> {
        if self.0.len() < n {
            return Err(EnvelopeError::Truncated);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, EnvelopeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, EnvelopeError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, EnvelopeError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

impl TxEnvelope {
    /// Builds an envelope whose fee authorization covers `fee`.
    pub fn signed(account: AccountId, kind: TxKind, fee: u64, keys: &AccountKeys) -> Self {
        let binding = fee_binding(account, &kind, fee);
        let sig = keys.sign(account, &binding);
        Self { account, kind, sig }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend(self.account.0.to_le_bytes());
        self.kind.encode_into(&mut out);
        out.extend((self.sig.len() as u32).to_le_bytes());
        out.extend(&self.sig);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        let mut r = Reader(bytes);
        if r.take(4).map_err(|_| EnvelopeError::NotAnEnvelope)? != MAGIC {
            return Err(EnvelopeError::NotAnEnvelope);
        }
        let account = AccountId(r.u64()?);
        let kind = match r.u8()? {
            0 => {
                let len = r.u32()? as usize;
                TxKind::Opaque {
                    data: r.take(len)?.to_vec(),
                }
            }
            1 => TxKind::Transfer {
                to: AccountId(r.u64()?),
                amount: r.u64()?,
            },
            2 => TxKind::Stake {
                op: StakeOp::Lock {
                    node: r.u32()?,
                    amount: r.u64()?,
                },
            },
            3 => TxKind::Stake {
                op: StakeOp::Delegate {
                    node: r.u32()?,
                    to: r.u32()?,
                },
            },
            4 => TxKind::Stake {
                op: StakeOp::Unlock { node: r.u32()? },
            },
            t => return Err(EnvelopeError::BadKind(t)),
        };
        let len = r.u32()? as usize;
        let sig = r.take(len)?.to_vec();
        if !r.0.is_empty() {
            return Err(EnvelopeError::TrailingBytes(r.0.len()));
        }
        Ok(Self { account, kind, sig })
    }

    /// The fee authorization this envelope carries for a transaction with `fee`.
    pub fn fee_authorization(&self, fee: u64) -> FeeAuthorization {
        FeeAuthorization {
            account: self.account,
            amount: fee,
            binding: fee_binding(self.account, &self.kind, fee),
            sig: self.sig.clone(),
        }
    }
}

/// Digest a fee authorization signs: the paying account, the operation, and the fee.
pub fn fee_binding(account: AccountId, kind: &TxKind, fee: u64) -> TxDigest {
    let mut buf = b"blockmania/fee-auth/v1".to_vec();
    buf.extend(account.0.to_le_bytes());
    kind.encode_into(&mut buf);
    buf.extend(fee.to_le_bytes());
    TxDigest(Sha256::digest(&buf).into())
}

/// A signed statement that `amount` may be deducted from `account`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeAuthorization {
    pub account: AccountId,
    pub amount: u64,
    pub binding: TxDigest,
    #[serde(with = "hex::serde")]
    pub sig: Vec<u8>,
}

impl FeeAuthorization {
    pub fn verify(&self, keys: &AccountKeys) -> bool {
        keys.verify(self.account, &self.binding, &self.sig)
    }
}

/// Deterministic keyed-MAC stand-in for account signatures.
#[derive(Clone, Debug)]
pub struct AccountKeys {
    seed: [u8; 32],
}

impl AccountKeys {
    pub fn new(seed: &[u8]) -> Self {
        Self {
            seed: Sha256::digest(seed).into(),
        }
    }

    pub fn sign(&self, account: AccountId, binding: &TxDigest) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(b"blockmania/account-mac/v1");
        h.update(self.seed);
        h.update(account.0.to_le_bytes());
        h.update(binding.0);
        h.finalize().to_vec()
    }

    pub fn verify(&self, account: AccountId, binding: &TxDigest, sig: &[u8]) -> bool {
        self.sign(account, binding) == sig
    }
}

impl Default for AccountKeys {
    fn default() -> Self {
        Self::new(b"blockmania-default-accounts")
    }
}
