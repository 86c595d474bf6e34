//! Per-request CSV rows and report files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use oppcomp::sim::{RequestRecord, SimTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{file}: {source}")]
    Io { file: String, source: std::io::Error },
    #[error("{file}: {source}")]
    Csv { file: String, source: csv::Error },
    #[error("{file}: {source}")]
    Json { file: String, source: serde_json::Error },
}

/// One simulated request. Times are in seconds; phase columns are empty
/// for requests still pending at the end of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRow {
    pub seed: u64,
    pub policy: String,
    pub request_id: u64,
    pub seeker: u32,
    pub input: u8,
    pub output: u8,
    pub gen_time: f64,
    pub commit_time: Option<f64>,
    pub completion_time: Option<f64>,
    pub provisioning_time: Option<f64>,
    pub plan: String,
    pub n_legs: usize,
    pub wait: Option<f64>,
    pub input_transfer: Option<f64>,
    /// Summed over legs.
    pub queue: Option<f64>,
    pub exec: Option<f64>,
    /// Interleg handoffs and final output delivery.
    pub transfer: Option<f64>,
    /// Model estimate of the provisioning time, counted from generation.
    pub estimate: Option<f64>,
    pub plan_changes: u32,
    pub rank_exact: bool,
}

impl RequestRow {
    pub fn from_record(seed: u64, r: &RequestRecord) -> Self {
        let phases = r.phases();
        let sum = |f: fn(&oppcomp::sim::LegPhases) -> SimTime| phases.as_ref().map(|p| p.legs.iter().map(|l| f(l).secs()).sum());
        RequestRow {
            seed,
            policy: r.policy.to_string(),
            request_id: r.id,
            seeker: r.seeker.0,
            input: r.request.input(),
            output: r.request.output(),
            gen_time: r.gen_time.secs(),
            commit_time: r.commit_time.map(SimTime::secs),
            completion_time: r.completion_time.map(SimTime::secs),
            provisioning_time: r.provisioning_time().map(SimTime::secs),
            plan: r.plan(),
            n_legs: r.legs.len(),
            wait: phases.as_ref().map(|p| p.wait.secs()),
            input_transfer: phases.as_ref().map(|p| p.input.secs()),
            queue: sum(|l| l.queue),
            exec: sum(|l| l.exec),
            transfer: sum(|l| l.transfer),
            estimate: r.estimated_provisioning_time(),
            plan_changes: r.plan_changes,
            rank_exact: r.rank_exact,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.provisioning_time.is_some()
    }
}

pub fn write_rows(path: &Path, rows: &[RequestRow]) -> Result<(), ReportError> {
    let file = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|source| ReportError::Csv { file: file.clone(), source })?;
    for r in rows {
        w.serialize(r).map_err(|source| ReportError::Csv { file: file.clone(), source })?;
    }
    w.flush().map_err(|source| ReportError::Io { file, source })
}

pub fn read_rows(path: &Path) -> Result<Vec<RequestRow>, ReportError> {
    let file = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|source| ReportError::Csv { file: file.clone(), source })?;
    r.deserialize().collect::<Result<_, _>>().map_err(|source| ReportError::Csv { file, source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let file = path.display().to_string();
    let f = File::create(path).map_err(|source| ReportError::Io { file: file.clone(), source })?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| ReportError::Json { file: file.clone(), source })?;
    writeln!(w).and_then(|_| w.flush()).map_err(|source| ReportError::Io { file, source })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let file = path.display().to_string();
    let f = File::open(path).map_err(|source| ReportError::Io { file: file.clone(), source })?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| ReportError::Json { file, source })
}
