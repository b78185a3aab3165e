//! Rounds-to-decision as a function of network latency.

use serde::{Deserialize, Serialize};

use super::batch::map_runs;
use super::config::SimConfig;
use super::metrics::Summary;
use crate::block_dag::Round;

pub const DEFAULT_GRID: [f64; 7] = [0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_nodes: u32,
    pub rounds: Round,
    /// Positions below this round are excluded; early timers run on the bootstrap timeout.
    pub warmup: Round,
    pub block_interval: f64,
    pub jitter_mean_frac: f64,
    pub latencies: Vec<f64>,
    pub seeds: u64,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_nodes: 4,
            rounds: 40,
            warmup: 10,
            block_interval: 2.0,
            jitter_mean_frac: 0.1,
            latencies: DEFAULT_GRID.to_vec(),
            seeds: 10,
            base_seed: 0,
        }
    }
}

impl SweepConfig {
    fn config(&self, latency: f64, seed: u64) -> SimConfig {
        let mut cfg = SimConfig::new(self.n_nodes, self.rounds, latency, seed);
        cfg.block_interval = self.block_interval;
        cfg.latency.jitter_mean_frac = self.jitter_mean_frac;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub latency: f64,
    pub mean_rounds: f64,
    pub min_rounds: f64,
    pub max_rounds: f64,
    pub runs: u64,
    /// Runs that hit the round budget or saw conflicting decisions.
    pub failed_runs: u64,
}

/// One row per latency; each aggregates rounds-to-decision over every
/// measured position of every seeded run.
pub fn sweep(cfg: &SweepConfig) -> Vec<SweepRow> {
    let mut configs = Vec::new();
    for &l in &cfg.latencies {
        for s in 0..cfg.seeds {
            configs.push(cfg.config(l, cfg.base_seed + s));
        }
    }
    let warmup = cfg.warmup;
    let results = map_runs(&configs, |c| {
        super::engine::run(c.clone()).ok().map(|m| {
            let ok = m.completed && m.is_safe();
            let values: Vec<f64> = m
                .positions
                .iter()
                .filter(|p| p.position.round >= warmup)
                .filter_map(|p| p.rounds_to_decision().map(|r| r as f64))
                .collect();
            (ok, values)
        })
    });
    cfg.latencies
        .iter()
        .zip(results.chunks(cfg.seeds.max(1) as usize))
        .map(|(&latency, chunk)| {
            let mut values = Vec::new();
            let mut failed = 0;
            for r in chunk {
                match r {
                    Some((ok, v)) => {
                        failed += u64::from(!ok);
                        values.extend_from_slice(v);
                    }
                    None => failed += 1,
                }
            }
            let s = Summary::of(values);
            SweepRow {
                latency,
                mean_rounds: s.map_or(f64::NAN, |s| s.mean),
                min_rounds: s.map_or(f64::NAN, |s| s.min),
                max_rounds: s.map_or(f64::NAN, |s| s.max),
                runs: chunk.len() as u64,
                failed_runs: failed,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of y on x. `None` for fewer than two distinct x.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Rows from the last flat point (mean within half a round of the minimum) onwards.
pub fn increasing_region(rows: &[SweepRow]) -> &[SweepRow] {
    let floor = rows
        .iter()
        .map(|r| r.mean_rounds)
        .fold(f64::INFINITY, f64::min);
    let knee = rows
        .iter()
        .rposition(|r| r.mean_rounds <= floor + 0.5)
        .unwrap_or(0);
    &rows[knee..]
}
