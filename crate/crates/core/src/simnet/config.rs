use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block_dag::{NodeId, Round};
use crate::interpreter::TimeoutPolicy;
use crate::trb::{QuorumConfig, QuorumError};
use crate::xblockmania::{XConfig, XConfigError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("block_interval must be positive and finite, got {0}")]
    Interval(f64),
    #[error("latency must be non-negative and finite")]
    Latency,
    #[error("adversary assigned to node {0}, which is outside the quorum")]
    UnknownNode(NodeId),
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error(transparent)]
    Quorum(#[from] QuorumError),
    #[error(transparent)]
    X(#[from] XConfigError),
    #[error("bad adversary spec `{0}`")]
    AdversarySpec(String),
}

/// Per-link delay: `base` plus an exponential sample with mean `base · jitter_mean_frac`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub base: f64,
    pub jitter_mean_frac: f64,
}

impl LatencyModel {
    pub fn new(base: f64) -> Self {
        Self {
            base,
            jitter_mean_frac: 0.1,
        }
    }

    pub fn jitter_mean(&self) -> f64 {
        self.base * self.jitter_mean_frac
    }
}

/// A window of arbitrary extra delay on every link, followed by synchrony.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsyncPeriod {
    /// Messages sent at or after this tick get no extra delay.
    pub good_from: f64,
    /// Extra delay is uniform in `[0, max_extra)` before `good_from`.
    pub max_extra: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryBehavior {
    Honest,
    /// Stops emitting and answering fetches from this round on.
    Silent {
        from_round: Round,
    },
    /// Emits two blocks per round; `split` receives fork A, everyone else fork B.
    Equivocator {
        split: BTreeSet<NodeId>,
    },
    /// Adds `extra_ticks` to every outgoing message.
    Delayer {
        extra_ticks: f64,
    },
    /// References a random subset of known blocks in random order and
    /// broadcasts malformed blocks now and then.
    ArbitraryRefs {
        seed: u64,
    },
}

impl AdversaryBehavior {
    pub fn is_honest(&self) -> bool {
        matches!(self, AdversaryBehavior::Honest)
    }
}

impl fmt::Display for AdversaryBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryBehavior::Honest => f.write_str("honest"),
            AdversaryBehavior::Silent { from_round } => write!(f, "silent:{from_round}"),
            AdversaryBehavior::Equivocator { split } => {
                let parts: Vec<String> = split.iter().map(|n| n.to_string()).collect();
                write!(f, "equivocator:{}", parts.join("+"))
            }
            AdversaryBehavior::Delayer { extra_ticks } => write!(f, "delayer:{extra_ticks}"),
            AdversaryBehavior::ArbitraryRefs { seed } => write!(f, "arbitrary:{seed}"),
        }
    }
}

impl FromStr for AdversaryBehavior {
    type Err = ConfigError;

    /// `honest`, `silent[:from]`, `equivocator:a+b+..`, `delayer:<ticks>`, `arbitrary:<seed>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::AdversarySpec(s.to_owned());
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("honest", None) => Ok(AdversaryBehavior::Honest),
            ("silent", None) => Ok(AdversaryBehavior::Silent { from_round: 0 }),
            ("silent", Some(a)) => Ok(AdversaryBehavior::Silent {
                from_round: a.parse().map_err(|_| bad())?,
            }),
            ("equivocator", Some(a)) => {
                let split = if a.is_empty() {
                    BTreeSet::new()
                } else {
                    a.split('+')
                        .map(|n| n.parse::<NodeId>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad())?
                };
                Ok(AdversaryBehavior::Equivocator { split })
            }
            ("delayer", Some(a)) => {
                let extra: f64 = a.parse().map_err(|_| bad())?;
                if !extra.is_finite() || extra < 0.0 {
                    return Err(bad());
                }
                Ok(AdversaryBehavior::Delayer { extra_ticks: extra })
            }
            ("arbitrary", Some(a)) => Ok(AdversaryBehavior::ArbitraryRefs {
                seed: a.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Parses `<node>=<behavior>`, e.g. `3=silent:0` or `2=equivocator:0+1`.
pub fn parse_assignment(s: &str) -> Result<(NodeId, AdversaryBehavior), ConfigError> {
    let (node, behavior) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::AdversarySpec(s.to_owned()))?;
    let node = node
        .trim()
        .parse()
        .map_err(|_| ConfigError::AdversarySpec(s.to_owned()))?;
    Ok((node, behavior.trim().parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    /// Reference every valid block received since the previous emission.
    Basic,
    /// Reference at most `heads` heads chosen by uncovered weight.
    X { heads: usize },
}

/// Which nodes run an interpreter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observers {
    All,
    Honest,
    Nodes(BTreeSet<NodeId>),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TxLoad {
    /// Transactions per node per round.
    pub rate: u32,
    /// Payload bytes per transaction.
    pub payload_size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_nodes: u32,
    pub f: u32,
    /// Positions `(n, k)` with `k < rounds` must be decided for the run to complete.
    pub rounds: Round,
    pub block_interval: f64,
    pub latency: LatencyModel,
    pub adversaries: BTreeMap<NodeId, AdversaryBehavior>,
    pub mode: Mode,
    pub seed: u64,
    pub tx_load: TxLoad,
    pub observers: Observers,
    pub timeout: TimeoutPolicy,
    pub async_period: Option<AsyncPeriod>,
    /// Stake weights; `None` runs the unweighted quorum.
    pub weights: Option<BTreeMap<NodeId, u64>>,
    /// Per-node emission offset in ticks.
    pub clock_skew: BTreeMap<NodeId, f64>,
    /// No node emits a block for a round at or beyond this; defaults to `rounds + 100`.
    pub max_round: Option<Round>,
    pub retransmit: bool,
}

impl SimConfig {
    /// An all-honest basic-mode configuration with `f = (n-1)/3`.
    pub fn new(n_nodes: u32, rounds: Round, latency: f64, seed: u64) -> Self {
        Self {
            n_nodes,
            f: n_nodes.saturating_sub(1) / 3,
            rounds,
            block_interval: 2.0,
            latency: LatencyModel::new(latency),
            adversaries: BTreeMap::new(),
            mode: Mode::Basic,
            seed,
            tx_load: TxLoad::default(),
            observers: Observers::Honest,
            timeout: TimeoutPolicy::default(),
            async_period: None,
            weights: None,
            clock_skew: BTreeMap::new(),
            max_round: None,
            retransmit: true,
        }
    }

    pub fn behavior(&self, node: NodeId) -> &AdversaryBehavior {
        self.adversaries
            .get(&node)
            .unwrap_or(&AdversaryBehavior::Honest)
    }

    pub fn is_honest(&self, node: NodeId) -> bool {
        self.behavior(node).is_honest()
    }

    pub fn honest_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n_nodes).filter(|&n| self.is_honest(n))
    }

    pub fn observes(&self, node: NodeId) -> bool {
        match &self.observers {
            Observers::All => true,
            Observers::Honest => self.is_honest(node),
            Observers::Nodes(set) => set.contains(&node),
            Observers::None => false,
        }
    }

    pub fn max_round(&self) -> Round {
        self.max_round.unwrap_or(self.rounds + 100)
    }

    pub fn quorum(&self) -> Result<QuorumConfig, ConfigError> {
        Ok(match &self.weights {
            Some(w) => QuorumConfig::weighted(self.n_nodes, w.clone())?,
            None => QuorumConfig::with_faults(self.n_nodes, self.f)?,
        })
    }

    pub fn x_config(&self) -> Result<Option<XConfig>, ConfigError> {
        match self.mode {
            Mode::Basic => Ok(None),
            Mode::X { heads } => Ok(Some(XConfig::new(heads, self.seed)?)),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.block_interval.is_finite() && self.block_interval > 0.0) {
            return Err(ConfigError::Interval(self.block_interval));
        }
        let l = &self.latency;
        if !(l.base.is_finite()
            && l.base >= 0.0
            && l.jitter_mean_frac.is_finite()
            && l.jitter_mean_frac >= 0.0)
        {
            return Err(ConfigError::Latency);
        }
        if self.rounds == 0 {
            return Err(ConfigError::NoRounds);
        }
        if let Some(&n) = self.adversaries.keys().find(|&&n| n >= self.n_nodes) {
            return Err(ConfigError::UnknownNode(n));
        }
        self.quorum()?;
        self.x_config()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adversary_specs_parse_and_print() {
        for s in [
            "silent:0",
            "silent:7",
            "equivocator:0+1",
            "delayer:5",
            "delayer:0.25",
            "arbitrary:7",
            "honest",
        ] {
            let b: AdversaryBehavior = s.parse().unwrap();
            assert_eq!(b.to_string(), s);
        }
        assert_eq!(
            "silent".parse::<AdversaryBehavior>().unwrap(),
            AdversaryBehavior::Silent { from_round: 0 }
        );
        assert_eq!(parse_assignment("3=silent").unwrap().0, 3);
        for bad in ["silent:x", "delayer:-1", "wat", "equivocator:a", "3silent"] {
            assert!(
                bad.parse::<AdversaryBehavior>().is_err() || parse_assignment(bad).is_err(),
                "{bad}"
            );
        }
    }

    #[test]
    fn validation() {
        let mut cfg = SimConfig::new(4, 10, 1.0, 0);
        assert!(cfg.validate().is_ok());
        cfg.block_interval = 0.0;
        assert!(matches!(cfg.validate(), Err(ConfigError::Interval(_))));
        cfg.block_interval = 2.0;
        cfg.adversaries
            .insert(4, AdversaryBehavior::Silent { from_round: 0 });
        assert_eq!(cfg.validate(), Err(ConfigError::UnknownNode(4)));
        cfg.adversaries.clear();
        cfg.f = 2;
        assert!(matches!(cfg.validate(), Err(ConfigError::Quorum(_))));
    }
}
