use std::fmt::Write as _;

use thiserror::Error;

use super::block::{Block, DecodeError};

const MAGIC: &str = "blockmania-dag v1";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("missing or malformed header line: {0:?}")]
    Header(String),
    #[error("line {line}: {source}")]
    Hex {
        line: usize,
        source: hex::FromHexError,
    },
    #[error("line {line}: {source}")]
    Decode { line: usize, source: DecodeError },
}

/// A list of blocks together with the quorum parameters they were produced under.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DagDump {
    pub n_nodes: u32,
    pub f: u32,
    pub blocks: Vec<Block>,
}

impl DagDump {
    pub fn new(n_nodes: u32, f: u32, blocks: Vec<Block>) -> Self {
        Self { n_nodes, f, blocks }
    }

    /// One header line, then one hex-encoded block (signature included) per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} n={} f={}", self.n_nodes, self.f);
        for b in &self.blocks {
            out.push_str(&hex::encode(b.encode()));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DumpError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| DumpError::Header(String::new()))?;
        let (n_nodes, f) =
            parse_header(header).ok_or_else(|| DumpError::Header(header.to_string()))?;
        let mut blocks = Vec::new();
        for (i, line) in lines {
            let bytes = hex::decode(line.trim()).map_err(|source| DumpError::Hex {
                line: i + 1,
                source,
            })?;
            blocks.push(Block::decode(&bytes).map_err(|source| DumpError::Decode {
                line: i + 1,
                source,
            })?);
        }
        Ok(Self { n_nodes, f, blocks })
    }
}

fn parse_header(line: &str) -> Option<(u32, u32)> {
    let rest = line.trim().strip_prefix(MAGIC)?;
    let mut n = None;
    let mut f = None;
    for field in rest.split_whitespace() {
        match field.split_once('=')? {
            ("n", v) => n = Some(v.parse().ok()?),
            ("f", v) => f = Some(v.parse().ok()?),
            _ => return None,
        }
    }
    Some((n?, f?))
}
