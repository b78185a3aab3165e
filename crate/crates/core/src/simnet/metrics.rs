use serde::{Deserialize, Serialize};

use crate::block_dag::{NodeId, Position, Round};
use crate::trb::Value;

use super::bytes::FormulaFit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Summary> {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        Some(Summary {
            count: n,
            min: v[0],
            mean: v.iter().sum::<f64>() / n as f64,
            max: v[n - 1],
            median,
        })
    }
}

/// Outcome for one position across the honest observers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionMetric {
    pub position: Position,
    pub decision: Option<Value>,
    /// Earliest deciding round seen by any honest observer.
    pub decision_round: Option<Round>,
    /// Tick at which the last honest observer decided.
    pub decision_tick: Option<f64>,
}

impl PositionMetric {
    pub fn rounds_to_decision(&self) -> Option<u64> {
        self.decision_round
            .map(|r| r.saturating_sub(self.position.round))
    }
}

/// Two honest observers (or one observer with itself) disagreeing on a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub position: Position,
    pub observer_a: NodeId,
    pub value_a: Value,
    pub observer_b: NodeId,
    pub value_b: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ByteSummary {
    pub per_block_overhead: Option<Summary>,
    pub references_per_block: Option<Summary>,
    pub fit: Option<FormulaFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionStats {
    /// Rounds until every honest chain covers a block, over honest blocks in the measured rounds.
    pub latency: Option<Summary>,
    /// Honest blocks in the measured rounds not yet covered by every honest chain at the end.
    pub incomplete: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_nodes: u32,
    pub f: u32,
    pub rounds: Round,
    /// Every position below `rounds` decided by every honest observer.
    pub completed: bool,
    /// Honest observers existed but the round budget ran out first.
    pub liveness_failure: bool,
    pub end_tick: f64,
    pub blocks_emitted: u64,
    pub deliveries: u64,
    pub fetch_requests: u64,
    pub retransmissions: u64,
    pub positions: Vec<PositionMetric>,
    pub rounds_to_decision: Option<Summary>,
    pub safety_violations: Vec<SafetyViolation>,
    pub equivocations_detected: usize,
    pub bytes: ByteSummary,
    pub txs_ordered: u64,
    /// Transactions in decided blocks per simulated tick.
    pub throughput: f64,
    pub inclusion: Option<InclusionStats>,
}

impl Metrics {
    /// Rounds-to-decision over positions with round in `[from, rounds)`.
    pub fn rounds_to_decision_from(&self, from: Round) -> Option<Summary> {
        Summary::of(
            self.positions
                .iter()
                .filter(|p| p.position.round >= from)
                .filter_map(|p| p.rounds_to_decision().map(|r| r as f64)),
        )
    }

    pub fn is_safe(&self) -> bool {
        self.safety_violations.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_stats() {
        let s = Summary::of([3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!(
            (s.count, s.min, s.max, s.mean, s.median),
            (4, 1.0, 10.0, 4.0, 2.5)
        );
        assert_eq!(Summary::of([5.0]).unwrap().median, 5.0);
        assert!(Summary::of(std::iter::empty()).is_none());
    }
}
