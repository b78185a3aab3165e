use serde::{Deserialize, Serialize};

use crate::trb::QuorumConfig;

/// Logical timeout length, in rounds, derived from observed block delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeoutPolicy {
    pub c: u64,
    pub bootstrap_t: u64,
}

impl Default for TimeoutPolicy {
    fn default() -> Self {
        Self {
            c: 10,
            bootstrap_t: 1,
        }
    }
}

impl TimeoutPolicy {
    /// `T = c·t`, where t is the (f+1)-th smallest per-peer delay once at
    /// least 2f+1 peers have been observed, and `bootstrap_t` before that.
    pub fn timeout(&self, delays: impl IntoIterator<Item = u64>, f: u32) -> u64 {
        let mut d: Vec<u64> = delays.into_iter().collect();
        let f = f as usize;
        let t = if d.len() > 2 * f {
            d.sort_unstable();
            d[f].max(1)
        } else {
            self.bootstrap_t
        };
        self.c * t
    }
}

/// Timer length for a machine working in `view`: the base timeout doubled per
/// view, so machines whose timers drifted apart eventually overlap in one view.
pub fn view_timeout(base: u64, view: u64) -> u64 {
    base.saturating_mul(1 << view.min(MAX_BACKOFF_DOUBLINGS))
}

const MAX_BACKOFF_DOUBLINGS: u64 = 16;

pub fn compute_timeout(
    policy: &TimeoutPolicy,
    delays: impl IntoIterator<Item = u64>,
    q: &QuorumConfig,
) -> u64 {
    policy.timeout(delays, q.f())
}
