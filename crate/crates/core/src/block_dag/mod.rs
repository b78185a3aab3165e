//! Blocks, their canonical encoding, validity, and the local DAG store.

mod block;
mod crypto;
mod dump;
mod store;

pub use block::{
    hash_block, Block, BlockHash, DecodeError, DigestBuildHasher, DigestHasher, Entry,
    HashMapByDigest, HashSetByDigest, NodeId, ParseHashError, Position, Round,
};
pub use crypto::{MacScheme, NoVerify, SignatureScheme};
pub use dump::{DagDump, DumpError};
pub use store::{
    validate_block, DagStore, EquivocationEvidence, InsertReport, InvalidReason, Validity,
};
