//! Config-driven experiments, built-in suites and report output.

pub mod config;
pub mod experiments;
pub mod report;
pub mod suites;

use std::io;
use std::path::Path;

pub use config::{parse_config, ExperimentConfig};
pub use experiments::run_experiment;
pub use report::RunReport;

/// Runs `cfg` on a pool of `workers` threads (all cores when `None`).
pub fn run_with_workers(cfg: &ExperimentConfig, workers: Option<usize>) -> RunReport {
    match pool(workers) {
        Some(p) => p.install(|| run_experiment(cfg)),
        None => run_experiment(cfg),
    }
}

pub fn pool(workers: Option<usize>) -> Option<rayon::ThreadPool> {
    let n = workers?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .ok()
}

/// Runs `cfg` and writes its files and report under `out_dir`.
pub fn execute(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
) -> io::Result<RunReport> {
    let rep = run_with_workers(cfg, workers);
    rep.write(out_dir)?;
    Ok(rep)
}
