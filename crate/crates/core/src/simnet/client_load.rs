use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block_dag::{Entry, NodeId};

use super::config::TxLoad;

/// Fees are uniform in this range.
pub const FEE_RANGE: std::ops::RangeInclusive<u64> = 1..=100;

/// Seeded stream of client transactions submitted to one node.
#[derive(Clone, Debug)]
pub struct ClientLoad {
    load: TxLoad,
    rng: ChaCha8Rng,
}

impl ClientLoad {
    pub fn new(seed: u64, node: NodeId, load: TxLoad) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x636c_6965_6e74_0000 | node as u64);
        Self { load, rng }
    }

    /// The transactions for the node's next block.
    pub fn next_batch(&mut self) -> Vec<Entry> {
        (0..self.load.rate)
            .map(|_| {
                let mut payload = vec![0u8; self.load.payload_size as usize];
                self.rng.fill_bytes(&mut payload);
                let fee = self.rng.random_range(FEE_RANGE);
                Entry::Transaction { payload, fee }
            })
            .collect()
    }
}

/// Convenience for one-off inspection: the first `rounds` batches for `node`.
pub fn client_load(seed: u64, node: NodeId, load: TxLoad, rounds: usize) -> Vec<Vec<Entry>> {
    let mut stream = ClientLoad::new(seed, node, load);
    (0..rounds).map(|_| stream.next_batch()).collect()
}
