//! Independent runs share nothing, so a batch can be spread across threads.

use super::config::{ConfigError, SimConfig};
use super::engine::run;
use super::metrics::Metrics;

/// Runs every config, in parallel when the `parallel` feature is enabled.
/// Results are in input order either way.
pub fn run_many(configs: &[SimConfig]) -> Vec<Result<Metrics, ConfigError>> {
    map_runs(configs, |cfg| run(cfg.clone()))
}

pub fn run_many_sequential(configs: &[SimConfig]) -> Vec<Result<Metrics, ConfigError>> {
    configs.iter().map(|cfg| run(cfg.clone())).collect()
}

/// Applies `f` to every config, in parallel when the `parallel` feature is enabled.
pub fn map_runs<T, F>(configs: &[SimConfig], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&SimConfig) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        configs.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        configs.iter().map(f).collect()
    }
}
