//! Experiment harness: configuration, the named experiments and their reports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::time::Instant;

pub use config::{Experiment, ExperimentConfig};
pub use error::{HarnessError, HarnessResult};
pub use report::{ExperimentReport, MetricRow, Status, Table};

/// Runs one experiment. The config must already name a known experiment.
pub fn run(config: &ExperimentConfig, experiment: Experiment) -> HarnessResult<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let (metrics, tables) = experiments::dispatch(config, experiment)?;
    Ok(ExperimentReport {
        experiment,
        config: config.clone(),
        metrics,
        tables,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `experiment` twice and appends a determinism metric comparing the CSV digests.
pub fn run_checked(
    config: &ExperimentConfig,
    experiment: Experiment,
) -> HarnessResult<ExperimentReport> {
    let mut first = run(config, experiment)?;
    let second = run(config, experiment)?;
    let same = first.csv_digest() == second.csv_digest();
    first.metrics.push(MetricRow::check(
        "identical outputs on rerun",
        f64::from(u8::from(same)),
        "A8",
        same,
    ));
    Ok(first)
}
