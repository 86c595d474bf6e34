//! Subcommand implementations, independent of argument parsing.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use log::info;
use oppcomp::sim::{run, PolicySpec, SimError};
use oppcomp::trace::{serialize_trace, trace_stats, ContactInterval, TraceError, TraceSummary};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, TraceSource};
use crate::metrics::{summarize, Mode, Summary};
use crate::report::{write_json, write_rows, ReportError, RequestRow};
use crate::validate::{run_validation, BiasReport, ClosedForms, GridSpec};

pub const REQUESTS_FILE: &str = "requests.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RUNS_FILE: &str = "runs.json";
pub const BIAS_FILE: &str = "bias_report.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation (seed {seed}, {policy}): {source}")]
    Sim { seed: u64, policy: PolicySpec, source: SimError },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0} gated closed-form checks fell outside the band")]
    ValidationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ValidationFailed(_) => 1,
            _ => 2,
        }
    }
}

/// Identity of one simulation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    pub policy: PolicySpec,
    pub digest: String,
    pub events: u64,
    pub requests: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub config: ExperimentConfig,
    pub rows: Vec<RequestRow>,
    pub summary: Summary,
    pub runs: Vec<RunInfo>,
}

impl Bundle {
    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(out_dir)?;
        write_rows(&out_dir.join(REQUESTS_FILE), &self.rows)?;
        write_json(&out_dir.join(SUMMARY_FILE), &self.summary)?;
        write_json(&out_dir.join(RUNS_FILE), &self.runs)?;
        write_json(&out_dir.join("config.json"), &self.config)?;
        Ok(())
    }
}

/// Runs every (seed, policy) of `mode` and summarises the records.
pub fn run_experiment(mode: Mode, cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    cfg.validate()?;
    let policies = mode.policies(cfg);
    let traces: Vec<(u64, u32, Vec<ContactInterval>)> =
        cfg.seeds.par_iter().map(|&s| cfg.trace_for(s).map(|(n, t)| (s, n, t))).collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, PolicySpec)> = (0..traces.len()).flat_map(|i| policies.iter().map(move |&p| (i, p))).collect();
    info!("{} runs over {} seeds", jobs.len(), traces.len());
    let outputs: Vec<(RunInfo, Vec<RequestRow>)> = jobs
        .par_iter()
        .map(|&(i, policy)| {
            let (seed, n, trace) = (&traces[i].0, traces[i].1, &traces[i].2);
            let out = run(&cfg.sim_config(n), trace, policy, *seed).map_err(|source| CliError::Sim { seed: *seed, policy, source })?;
            let rows: Vec<RequestRow> = out.records.iter().map(|r| RequestRow::from_record(*seed, r)).collect();
            info!("seed {seed} {policy}: {} requests, {} events", rows.len(), out.events);
            let info = RunInfo { seed: *seed, policy, digest: out.digest, events: out.events, requests: rows.len() };
            Ok((info, rows))
        })
        .collect::<Result<_, CliError>>()?;
    let mut runs = Vec::with_capacity(outputs.len());
    let mut rows = Vec::new();
    for (info, r) in outputs {
        runs.push(info);
        rows.extend(r);
    }
    let summary = summarize(mode, cfg, &rows);
    Ok(Bundle { config: cfg.clone(), rows, summary, runs })
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Bundle, CliError> {
    let b = run_experiment(Mode::Simulate, cfg)?;
    b.write(out_dir)?;
    Ok(b)
}

pub fn cmd_compare(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Bundle, CliError> {
    let b = run_experiment(Mode::Compare, cfg)?;
    b.write(out_dir)?;
    Ok(b)
}

pub fn cmd_rank_eval(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Bundle, CliError> {
    let b = run_experiment(Mode::RankEval, cfg)?;
    b.write(out_dir)?;
    Ok(b)
}

/// Writes the bias report. Check [`BiasReport::passed`] for the gate.
pub fn cmd_validate(grid: &GridSpec, forms: &ClosedForms, out_dir: &Path) -> Result<BiasReport, CliError> {
    let report = run_validation(grid, forms);
    std::fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join(BIAS_FILE), &report)?;
    Ok(report)
}

/// Statistics of the trace the config yields for `seed`, optionally
/// writing the trace itself.
pub fn cmd_trace_stats(cfg: &ExperimentConfig, seed: u64, emit: Option<&Path>) -> Result<TraceSummary, CliError> {
    let (_, trace) = cfg.trace_for(seed)?;
    if let Some(path) = emit {
        serialize_trace(&trace, BufWriter::new(File::create(path)?))?;
    }
    let horizon = match cfg.trace {
        TraceSource::Synthetic { .. } => Some(cfg.duration),
        TraceSource::File { .. } => None,
    };
    Ok(trace_stats(&trace, horizon))
}
