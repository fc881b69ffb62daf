//! Experiment driver for `onset-core`: configuration loading, experiment
//! pipelines, parameter sweeps, run directories and the acceptance suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod sweep;

use std::path::PathBuf;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiments::run_experiment;
use crate::output::{write_run, RunInfo, RunManifest, RunOutput};

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T, F>(workers: usize, f: F) -> CliResult<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Run directory used when the configuration names none.
pub fn default_out_dir(config: &ExperimentConfig) -> PathBuf {
    PathBuf::from("out").join(format!("{}-seed{}", config.kind.name(), config.seed))
}

pub fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Writes `output` as a run directory produced by `config`.
pub fn record_run(
    config: &ExperimentConfig,
    kind: &str,
    workers: usize,
    output: &RunOutput,
    started_at: String,
    started: Instant,
) -> CliResult<(PathBuf, RunManifest)> {
    let dir = config.out.clone().unwrap_or_else(|| default_out_dir(config));
    let info = RunInfo {
        kind: kind.to_string(),
        seed: config.seed,
        workers,
        config: serde_json::to_value(config).map_err(|e| CliError::config(e.to_string()))?,
        started_at,
        duration: started.elapsed(),
    };
    let manifest = write_run(&dir, output, config.format, info)?;
    Ok((dir, manifest))
}

/// Runs the configured experiment and writes its run directory.
pub fn execute(config: &ExperimentConfig) -> CliResult<(PathBuf, RunManifest)> {
    let workers = config.workers.unwrap_or_else(default_workers);
    let started_at = now_rfc3339();
    let started = Instant::now();
    let output = with_workers(workers, || run_experiment(config))??;
    record_run(config, config.kind.name(), workers, &output, started_at, started)
}

/// Runs the acceptance suite on `workers` threads and writes its run
/// directory; the outcomes are returned whether or not they all pass.
pub fn execute_accept(
    opts: &acceptance::AcceptOptions,
    workers: usize,
    dir: &std::path::Path,
    format: config::OutputFormat,
) -> CliResult<Vec<acceptance::CriterionOutcome>> {
    let started_at = now_rfc3339();
    let started = Instant::now();
    let outcomes = with_workers(workers, || acceptance::run_all(opts))??;
    let output = acceptance::acceptance_output(opts, &outcomes);
    let info = RunInfo {
        kind: "accept".into(),
        seed: opts.seed,
        workers,
        config: serde_json::json!({"seed": opts.seed, "quick": opts.quick}),
        started_at,
        duration: started.elapsed(),
    };
    write_run(dir, &output, format, info)?;
    Ok(outcomes)
}
