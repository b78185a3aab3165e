//! Deterministic DAG shapes used by tests, benches and the CLI.

use std::collections::BTreeSet;

use crate::block_dag::{Block, BlockHash, Entry, NodeId, Round, SignatureScheme};

/// Every live node emits one block per round; a round-k block links its own
/// round-(k−1) block and references every other live node's round-(k−1)
/// block in node order.
pub fn lockstep(
    n_nodes: u32,
    rounds: Round,
    silent: &BTreeSet<NodeId>,
    scheme: &dyn SignatureScheme,
) -> Vec<Block> {
    let mut blocks = Vec::new();
    let mut last: Vec<Option<BlockHash>> = vec![None; n_nodes as usize];
    for k in 0..rounds {
        let mut next = last.clone();
        for node in (0..n_nodes).filter(|n| !silent.contains(n)) {
            let refs = (0..n_nodes)
                .filter(|&m| m != node)
                .filter_map(|m| last[m as usize])
                .map(Entry::Reference)
                .collect();
            let b = Block::unsigned(node, k, last[node as usize], refs).sign_with(scheme);
            next[node as usize] = Some(b.hash());
            blocks.push(b);
        }
        last = next;
    }
    blocks
}
