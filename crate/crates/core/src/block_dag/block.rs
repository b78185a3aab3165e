use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Index of a node in the active quorum.
pub type NodeId = u32;

/// Per-node block sequence number.
pub type Round = u64;

/// SHA-256 digest of a block's canonical encoding, signature excluded.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockHash(pub [u8; 32]);

impl BlockHash {
    pub const LEN: usize = 32;

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// Hasher for keys that are already uniformly distributed digests.
/// SipHash was a large share of simulation time at a few hundred nodes.
#[derive(Default, Clone, Copy)]
pub struct DigestHasher(u64);

impl Hasher for DigestHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        let mut chunks = bytes.chunks_exact(8);
        for c in &mut chunks {
            self.write_u64(u64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        }
        for &b in chunks.remainder() {
            self.write_u64(b as u64);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = (self.0.rotate_left(5) ^ v).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
    }

    fn write_usize(&mut self, v: usize) {
        self.write_u64(v as u64);
    }
}

pub type DigestBuildHasher = BuildHasherDefault<DigestHasher>;
pub type HashMapByDigest<K, V> = HashMap<K, V, DigestBuildHasher>;
pub type HashSetByDigest<K> = HashSet<K, DigestBuildHasher>;

impl fmt::Display for BlockHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for BlockHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", &self.to_hex()[..8])
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid block hash `{0}`")]
pub struct ParseHashError(String);

impl FromStr for BlockHash {
    type Err = ParseHashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseHashError(s.to_owned()))?;
        Ok(BlockHash(out))
    }
}

impl Serialize for BlockHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BlockHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The slot `(node, round)` for which exactly one block, or nil, gets decided.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Position {
    pub node: NodeId,
    pub round: Round,
}

impl Position {
    pub fn new(node: NodeId, round: Round) -> Self {
        Position { node, round }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.node, self.round)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Entry {
    Transaction { payload: Vec<u8>, fee: u64 },
    Reference(BlockHash),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    pub node: NodeId,
    pub round: Round,
    pub prev: Option<BlockHash>,
    pub entries: Vec<Entry>,
    pub sig: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("block encoding truncated")]
    Truncated,
    #[error("unknown entry tag {0}")]
    BadEntryTag(u8),
    #[error("bad prev flag {0}")]
    BadPrevFlag(u8),
    #[error("{0} trailing bytes after block")]
    TrailingBytes(usize),
}

const TAG_TX: u8 = 0;
const TAG_REF: u8 = 1;

impl Block {
    pub fn unsigned(
        node: NodeId,
        round: Round,
        prev: Option<BlockHash>,
        entries: Vec<Entry>,
    ) -> Self {
        Block {
            node,
            round,
            prev,
            entries,
            sig: Vec::new(),
        }
    }

    pub fn position(&self) -> Position {
        Position::new(self.node, self.round)
    }

    pub fn hash(&self) -> BlockHash {
        hash_block(self)
    }

    pub fn references(&self) -> impl Iterator<Item = &BlockHash> + '_ {
        self.entries.iter().filter_map(|e| match e {
            Entry::Reference(h) => Some(h),
            Entry::Transaction { .. } => None,
        })
    }

    /// `prev` followed by every reference, in entry order.
    pub fn parents(&self) -> impl Iterator<Item = &BlockHash> + '_ {
        self.prev.iter().chain(self.references())
    }

    pub fn transactions(&self) -> impl Iterator<Item = (&[u8], u64)> + '_ {
        self.entries.iter().filter_map(|e| match e {
            Entry::Transaction { payload, fee } => Some((payload.as_slice(), *fee)),
            Entry::Reference(_) => None,
        })
    }

    /// Appends the canonical encoding without the signature.
    pub fn encode_unsigned_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.node.to_le_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        match &self.prev {
            None => out.push(0),
            Some(h) => {
                out.push(1);
                out.extend_from_slice(&h.0);
            }
        }
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for entry in &self.entries {
            match entry {
                Entry::Transaction { payload, fee } => {
                    out.push(TAG_TX);
                    out.extend_from_slice(&fee.to_le_bytes());
                    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
                    out.extend_from_slice(payload);
                }
                Entry::Reference(h) => {
                    out.push(TAG_REF);
                    out.extend_from_slice(&h.0);
                }
            }
        }
    }

    /// Full wire encoding: the unsigned encoding followed by the length-prefixed signature.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.entries.len() * 33 + self.sig.len());
        self.encode_unsigned_into(&mut out);
        out.extend_from_slice(&(self.sig.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.sig);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Block, DecodeError> {
        let mut r = Reader { buf: bytes };
        let node = u32::from_le_bytes(r.array()?);
        let round = u64::from_le_bytes(r.array()?);
        let prev = match r.byte()? {
            0 => None,
            1 => Some(BlockHash(r.array()?)),
            b => return Err(DecodeError::BadPrevFlag(b)),
        };
        let count = u32::from_le_bytes(r.array()?) as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            match r.byte()? {
                TAG_TX => {
                    let fee = u64::from_le_bytes(r.array()?);
                    let len = u32::from_le_bytes(r.array()?) as usize;
                    let payload = r.take(len)?.to_vec();
                    entries.push(Entry::Transaction { payload, fee });
                }
                TAG_REF => entries.push(Entry::Reference(BlockHash(r.array()?))),
                t => return Err(DecodeError::BadEntryTag(t)),
            }
        }
        let sig_len = u32::from_le_bytes(r.array()?) as usize;
        let sig = r.take(sig_len)?.to_vec();
        if !r.buf.is_empty() {
            return Err(DecodeError::TrailingBytes(r.buf.len()));
        }
        Ok(Block {
            node,
            round,
            prev,
            entries,
            sig,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn byte(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }
}

/// Digest of the canonical encoding, excluding the signature.
pub fn hash_block(block: &Block) -> BlockHash {
    let mut buf = Vec::with_capacity(64 + block.entries.len() * 33);
    block.encode_unsigned_into(&mut buf);
    BlockHash(Sha256::digest(&buf).into())
}
