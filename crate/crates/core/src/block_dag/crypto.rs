//! Block signing hooks.
//!
//! The protocol only needs "some asymmetric signature scheme". Everything in
//! this crate goes through [`SignatureScheme`], and the simulator uses
//! [`MacScheme`], a deterministic keyed-hash stand-in whose keys are derived
//! from a shared seed. It is not a real signature: anyone holding the seed can
//! forge. Swap in a real scheme by implementing the trait.

use sha2::{Digest, Sha256};

use super::block::{Block, BlockHash, NodeId};

pub trait SignatureScheme: Send + Sync {
    fn sign(&self, node: NodeId, digest: &BlockHash) -> Vec<u8>;
    fn verify(&self, node: NodeId, digest: &BlockHash, sig: &[u8]) -> bool;
}

#[derive(Clone, Debug)]
pub struct MacScheme {
    seed: [u8; 32],
}

impl MacScheme {
    pub fn new(seed: &[u8]) -> Self {
        MacScheme {
            seed: Sha256::digest(seed).into(),
        }
    }

    fn tag(&self, node: NodeId, digest: &BlockHash) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"blockmania/mac/v1");
        h.update(self.seed);
        h.update(node.to_le_bytes());
        h.update(digest.0);
        h.finalize().into()
    }
}

impl Default for MacScheme {
    fn default() -> Self {
        MacScheme::new(b"blockmania-default-keys")
    }
}

impl SignatureScheme for MacScheme {
    fn sign(&self, node: NodeId, digest: &BlockHash) -> Vec<u8> {
        self.tag(node, digest).to_vec()
    }

    fn verify(&self, node: NodeId, digest: &BlockHash, sig: &[u8]) -> bool {
        sig == self.tag(node, digest)
    }
}

/// Accepts every signature. Useful when replaying dumps signed under unknown keys.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoVerify;

impl SignatureScheme for NoVerify {
    fn sign(&self, _node: NodeId, _digest: &BlockHash) -> Vec<u8> {
        Vec::new()
    }

    fn verify(&self, _node: NodeId, _digest: &BlockHash, _sig: &[u8]) -> bool {
        true
    }
}

impl Block {
    pub fn sign_with(mut self, scheme: &dyn SignatureScheme) -> Self {
        self.sig = scheme.sign(self.node, &self.hash());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mac_round_trip_and_binding() {
        let s = MacScheme::default();
        let b = Block::unsigned(1, 0, None, vec![]).sign_with(&s);
        let h = b.hash();
        assert!(s.verify(1, &h, &b.sig));
        assert!(!s.verify(2, &h, &b.sig));
        assert!(!MacScheme::new(b"other").verify(1, &h, &b.sig));
    }
}
