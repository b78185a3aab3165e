//! TOML scenario files: a flat, editable form of `SimConfig`.

use std::collections::BTreeMap;

use blockmania::block_dag::NodeId;
use blockmania::interpreter::TimeoutPolicy;
use blockmania::simnet::{
    parse_assignment, AdversaryBehavior, AsyncPeriod, ConfigError, LatencyModel, Mode, Observers,
    SimConfig, TxLoad,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("scenario version {0} is not supported (expected {SCENARIO_VERSION})")]
    Version(u32),
    #[error("scenario key `{key}`: {source}")]
    Key {
        key: &'static str,
        source: ConfigError,
    },
    #[error("scenario key `mode`: expected `basic` or `x`, got `{0}`")]
    Mode(String),
    #[error("scenario key `observers`: expected `all`, `honest` or `none`, got `{0}`")]
    Observers(String),
    #[error("scenario key `{0}`: node ids must be integers")]
    NodeKey(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<u32>,
    pub rounds: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_round: Option<u64>,
    #[serde(default = "default_interval")]
    pub interval: f64,
    pub latency: f64,
    #[serde(default = "default_jitter")]
    pub jitter_mean_frac: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<usize>,
    #[serde(default = "default_observers")]
    pub observers: String,
    #[serde(default)]
    pub tx_rate: u32,
    #[serde(default)]
    pub tx_size: u32,
    #[serde(default = "default_true")]
    pub retransmit: bool,
    #[serde(default = "default_timeout_c")]
    pub timeout_c: u64,
    #[serde(default = "default_bootstrap_t")]
    pub timeout_bootstrap_t: u64,
    /// Node id to behavior spec, e.g. `3 = "silent:0"`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub adversaries: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub async_period: Option<AsyncPeriod>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub clock_skew: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stake: Option<StakeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StakeSection {
    /// Locked stake per node id; also the quorum weights.
    pub weights: BTreeMap<String, u64>,
    /// Close epochs of this many rounds after the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds_per_epoch: Option<u64>,
}

fn default_interval() -> f64 {
    2.0
}

fn default_jitter() -> f64 {
    0.1
}

fn default_mode() -> String {
    "basic".into()
}

fn default_observers() -> String {
    "honest".into()
}

fn default_true() -> bool {
    true
}

fn default_timeout_c() -> u64 {
    TimeoutPolicy::default().c
}

fn default_bootstrap_t() -> u64 {
    TimeoutPolicy::default().bootstrap_t
}

fn node_map<V: Copy>(
    key: &'static str,
    map: &BTreeMap<String, V>,
) -> Result<BTreeMap<NodeId, V>, ScenarioError> {
    map.iter()
        .map(|(k, &v)| {
            k.trim()
                .parse()
                .map(|n| (n, v))
                .map_err(|_| ScenarioError::NodeKey(key))
        })
        .collect()
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        if file.version != SCENARIO_VERSION {
            return Err(ScenarioError::Version(file.version));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are all representable")
    }

    /// Stake weights, if the scenario has a stake section.
    pub fn weights(&self) -> Result<Option<BTreeMap<NodeId, u64>>, ScenarioError> {
        self.stake
            .as_ref()
            .map(|s| node_map("stake.weights", &s.weights))
            .transpose()
    }

    pub fn to_config(&self) -> Result<SimConfig, ScenarioError> {
        let mut cfg = SimConfig::new(self.n, self.rounds, self.latency, self.seed);
        if let Some(f) = self.f {
            cfg.f = f;
        }
        cfg.max_round = self.max_round;
        cfg.block_interval = self.interval;
        cfg.latency = LatencyModel {
            base: self.latency,
            jitter_mean_frac: self.jitter_mean_frac,
        };
        cfg.mode = match self.mode.as_str() {
            "basic" => Mode::Basic,
            "x" => Mode::X {
                heads: self.x.unwrap_or(2),
            },
            other => return Err(ScenarioError::Mode(other.into())),
        };
        cfg.observers = match self.observers.as_str() {
            "all" => Observers::All,
            "honest" => Observers::Honest,
            "none" => Observers::None,
            other => return Err(ScenarioError::Observers(other.into())),
        };
        cfg.tx_load = TxLoad {
            rate: self.tx_rate,
            payload_size: self.tx_size,
        };
        cfg.retransmit = self.retransmit;
        cfg.timeout = TimeoutPolicy {
            c: self.timeout_c,
            bootstrap_t: self.timeout_bootstrap_t,
        };
        for (node, spec) in &self.adversaries {
            let (node, behavior) =
                parse_assignment(&format!("{node}={spec}")).map_err(|source| {
                    ScenarioError::Key {
                        key: "adversaries",
                        source,
                    }
                })?;
            cfg.adversaries.insert(node, behavior);
        }
        cfg.async_period = self.async_period;
        cfg.clock_skew = node_map("clock_skew", &self.clock_skew)?;
        cfg.weights = self.weights()?;
        validate(&cfg)?;
        Ok(cfg)
    }

    pub fn from_config(cfg: &SimConfig) -> Self {
        let (mode, x) = match cfg.mode {
            Mode::Basic => ("basic", None),
            Mode::X { heads } => ("x", Some(heads)),
        };
        let observers = match &cfg.observers {
            Observers::All => "all",
            Observers::Honest => "honest",
            // An explicit node list has no flat form; the honest set is the usual intent.
            Observers::Nodes(_) => "honest",
            Observers::None => "none",
        };
        let keyed =
            |m: &BTreeMap<NodeId, f64>| m.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        ScenarioFile {
            version: SCENARIO_VERSION,
            n: cfg.n_nodes,
            f: Some(cfg.f),
            rounds: cfg.rounds,
            max_round: cfg.max_round,
            interval: cfg.block_interval,
            latency: cfg.latency.base,
            jitter_mean_frac: cfg.latency.jitter_mean_frac,
            seed: cfg.seed,
            mode: mode.into(),
            x,
            observers: observers.into(),
            tx_rate: cfg.tx_load.rate,
            tx_size: cfg.tx_load.payload_size,
            retransmit: cfg.retransmit,
            timeout_c: cfg.timeout.c,
            timeout_bootstrap_t: cfg.timeout.bootstrap_t,
            adversaries: cfg
                .adversaries
                .iter()
                .filter(|(_, b)| !matches!(b, AdversaryBehavior::Honest))
                .map(|(n, b)| (n.to_string(), b.to_string()))
                .collect(),
            async_period: cfg.async_period,
            clock_skew: keyed(&cfg.clock_skew),
            stake: cfg.weights.as_ref().map(|w| StakeSection {
                weights: w.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                rounds_per_epoch: None,
            }),
        }
    }
}

fn validate(cfg: &SimConfig) -> Result<(), ScenarioError> {
    cfg.validate().map_err(|source| {
        let key = match source {
            ConfigError::Interval(_) => "interval",
            ConfigError::Latency => "latency",
            ConfigError::UnknownNode(_) | ConfigError::AdversarySpec(_) => "adversaries",
            ConfigError::NoRounds => "rounds",
            ConfigError::Quorum(_) => {
                if cfg.weights.is_some() {
                    "stake.weights"
                } else {
                    "f"
                }
            }
            ConfigError::X(_) => "x",
        };
        ScenarioError::Key { key, source }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
version = 1
n = 7
rounds = 12
latency = 1.5
seed = 9
mode = "x"
x = 2
tx_rate = 5
tx_size = 64

[adversaries]
3 = "silent:2"
5 = "equivocator:0+1"

[async_period]
good_from = 20.0
max_extra = 4.0

[stake]
weights = { 0 = 10, 1 = 10, 2 = 10, 3 = 10, 4 = 10, 5 = 10, 6 = 10 }
"#;

    #[test]
    fn parses_into_config() {
        let cfg = ScenarioFile::parse(SAMPLE).unwrap().to_config().unwrap();
        assert_eq!(cfg.n_nodes, 7);
        assert_eq!(cfg.f, 2);
        assert_eq!(cfg.mode, Mode::X { heads: 2 });
        assert_eq!(
            cfg.adversaries[&3],
            AdversaryBehavior::Silent { from_round: 2 }
        );
        assert_eq!(cfg.weights.as_ref().unwrap().len(), 7);
        assert_eq!(cfg.async_period.unwrap().good_from, 20.0);
    }

    #[test]
    fn config_round_trips() {
        let cfg = ScenarioFile::parse(SAMPLE).unwrap().to_config().unwrap();
        let text = ScenarioFile::from_config(&cfg).to_toml();
        assert_eq!(
            ScenarioFile::parse(&text).unwrap().to_config().unwrap(),
            cfg
        );
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ScenarioFile::parse(&format!("{SAMPLE}\nlatncy = 3\n")).unwrap_err();
        assert!(err.to_string().contains("latncy"), "{err}");
        let err =
            ScenarioFile::parse("version = 1\nn = 4\nrounds = 3\nlatency = 1\nmode = \"fast\"")
                .unwrap()
                .to_config()
                .unwrap_err();
        assert!(err.to_string().contains("`mode`"), "{err}");
    }

    #[test]
    fn bad_values_name_their_key() {
        let text = "version = 1\nn = 4\nrounds = 3\nlatency = 1\n[adversaries]\n9 = \"silent\"\n";
        let err = ScenarioFile::parse(text).unwrap().to_config().unwrap_err();
        assert!(err.to_string().contains("`adversaries`"), "{err}");
        assert!(matches!(
            ScenarioFile::parse("version = 2\nn = 4\nrounds = 3\nlatency = 1"),
            Err(ScenarioError::Version(2))
        ));
    }
}
