//! Experiment configuration: JSON file plus command-line overrides.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use oppcomp::composition::RequestTypes;
use oppcomp::sim::{PolicySpec, SimConfig};
use oppcomp::trace::{generate_synthetic, parse_trace, ContactInterval, SyntheticSpec};
use oppcomp::MAX_TYPE;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("cannot read {file}: {source}")]
    Io { file: PathBuf, source: std::io::Error },
    #[error("{file}: {path}: {source}")]
    Parse { file: PathBuf, path: String, source: serde_json::Error },
}

fn invalid(path: impl Into<String>, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid { path: path.into(), reason: reason.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSource {
    /// Independent exponential on-off process per node pair.
    Synthetic { n_nodes: u32, delta: f64, delta_prime: f64 },
    /// Contact trace in CSV form. The node count defaults to one past the
    /// largest id seen.
    File { path: PathBuf, n_nodes: Option<u32> },
}

/// Inclusive bounds on the data types a request may start and end at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeRanges {
    pub input: (u8, u8),
    pub output: (u8, u8),
}

impl Default for TypeRanges {
    fn default() -> Self {
        TypeRanges { input: (0, MAX_TYPE - 1), output: (1, MAX_TYPE) }
    }
}

impl TypeRanges {
    pub fn request_types(&self) -> Vec<RequestTypes> {
        let within = |x: u8, (lo, hi): (u8, u8)| lo <= x && x <= hi;
        RequestTypes::all().filter(|r| within(r.input(), self.input) && within(r.output(), self.output)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trace: TraceSource,
    pub duration: f64,
    pub warmup: f64,
    pub request_interval: (f64, f64),
    /// Size of every input and output parameter.
    pub io_size_bytes: f64,
    pub request_types: TypeRanges,
    pub density: f64,
    pub exec_mean: f64,
    pub cpu_max: u32,
    /// Per-node radio capacity in bytes per second.
    pub capacity: f64,
    pub policies: Vec<PolicySpec>,
    pub seeds: Vec<u64>,
    /// Consecutive requests per loss group in compare mode.
    pub group_size: usize,
    /// Plans per request in rank-eval mode.
    pub top_k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        ExperimentConfig {
            trace: TraceSource::Synthetic { n_nodes: sim.n_nodes, delta: 0.02, delta_prime: 0.005 },
            duration: sim.duration,
            warmup: sim.warmup,
            request_interval: sim.request_interval,
            io_size_bytes: sim.io_bytes,
            request_types: TypeRanges::default(),
            density: sim.density,
            exec_mean: sim.exec_mean,
            cpu_max: sim.cpu_max,
            capacity: sim.capacity,
            policies: vec![PolicySpec::Mev],
            seeds: (1..=5).collect(),
            group_size: 200,
            top_k: 5,
        }
    }
}

/// Values given on the command line, applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicySpec>,
    pub io_size: Option<f64>,
    pub cpu_max: Option<u32>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, file: &Path) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            file: file.to_path_buf(),
            path: e.path().to_string(),
            source: e.into_inner(),
        })
    }

    pub fn load(file: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(file).map_err(|source| ConfigError::Io { file: file.to_path_buf(), source })?;
        let cfg = Self::from_json_str(&text, file)?;
        cfg.resolve_paths(file.parent().unwrap_or(Path::new(".")))
    }

    /// Relative trace paths are taken relative to the config file.
    fn resolve_paths(mut self, base: &Path) -> Result<Self, ConfigError> {
        if let TraceSource::File { path, .. } = &mut self.trace {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(self)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if !o.seeds.is_empty() {
            self.seeds = o.seeds.clone();
        }
        if !o.policies.is_empty() {
            self.policies = o.policies.clone();
        }
        if let Some(io) = o.io_size {
            self.io_size_bytes = io;
        }
        if let Some(m) = o.cpu_max {
            self.cpu_max = m;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |path: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(invalid(path, format!("{x} is not a finite positive number")))
            }
        };
        match &self.trace {
            TraceSource::Synthetic { n_nodes, delta, delta_prime } => {
                if *n_nodes < 2 {
                    return Err(invalid("trace.synthetic.n_nodes", "at least two nodes are needed"));
                }
                positive("trace.synthetic.delta", *delta)?;
                positive("trace.synthetic.delta_prime", *delta_prime)?;
            }
            TraceSource::File { n_nodes: Some(n), .. } if *n < 2 => {
                return Err(invalid("trace.file.n_nodes", "at least two nodes are needed"));
            }
            TraceSource::File { .. } => {}
        }
        positive("duration", self.duration)?;
        if !(self.warmup.is_finite() && self.warmup >= 0.0) {
            return Err(invalid("warmup", format!("{} is not a finite non-negative number", self.warmup)));
        }
        if self.warmup >= self.duration {
            return Err(invalid("warmup", format!("{} is not below duration {}", self.warmup, self.duration)));
        }
        let (lo, hi) = self.request_interval;
        positive("request_interval[0]", lo)?;
        positive("request_interval[1]", hi)?;
        if lo > hi {
            return Err(invalid("request_interval", format!("lower bound {lo} exceeds upper bound {hi}")));
        }
        positive("io_size_bytes", self.io_size_bytes)?;
        positive("exec_mean", self.exec_mean)?;
        positive("capacity", self.capacity)?;
        if !(0.0..=1.0).contains(&self.density) {
            return Err(invalid("density", format!("{} is not in [0, 1]", self.density)));
        }
        for (name, (lo, hi)) in [("input", self.request_types.input), ("output", self.request_types.output)] {
            if lo > hi || hi > MAX_TYPE {
                return Err(invalid(format!("request_types.{name}"), format!("[{lo}, {hi}] is not a range within [0, {MAX_TYPE}]")));
            }
        }
        if self.request_types.request_types().is_empty() {
            return Err(invalid("request_types", "no request has input below output within these ranges"));
        }
        if self.policies.is_empty() {
            return Err(invalid("policies", "empty policy set"));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(p) {
                return Err(invalid(format!("policies[{i}]"), format!("{p} listed twice")));
            }
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "empty seed list"));
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return Err(invalid(format!("seeds[{i}]"), format!("seed {s} listed twice")));
            }
        }
        if self.group_size == 0 {
            return Err(invalid("group_size", "must be at least 1"));
        }
        if self.top_k == 0 {
            return Err(invalid("top_k", "must be at least 1"));
        }
        Ok(())
    }

    /// The contact trace used with `seed`.
    pub fn trace_for(&self, seed: u64) -> Result<(u32, Vec<ContactInterval>), ConfigError> {
        match &self.trace {
            TraceSource::Synthetic { n_nodes, delta, delta_prime } => {
                let spec = SyntheticSpec { n_nodes: *n_nodes, delta: *delta, delta_prime: *delta_prime, duration: self.duration, seed };
                let trace = generate_synthetic(&spec).map_err(|e| invalid("trace.synthetic", e))?;
                Ok((*n_nodes, trace))
            }
            TraceSource::File { path, n_nodes } => {
                let f = File::open(path).map_err(|source| ConfigError::Io { file: path.clone(), source })?;
                let (trace, _) = parse_trace(BufReader::new(f)).map_err(|e| invalid("trace.file.path", format!("{}: {e}", path.display())))?;
                let seen = trace.iter().map(|c| c.a.0.max(c.b.0) + 1).max().unwrap_or(0);
                let n = n_nodes.unwrap_or(seen.max(2));
                if seen > n {
                    return Err(invalid("trace.file.n_nodes", format!("trace mentions node {} but n_nodes is {n}", seen - 1)));
                }
                Ok((n, trace))
            }
        }
    }

    pub fn sim_config(&self, n_nodes: u32) -> SimConfig {
        SimConfig {
            n_nodes,
            duration: self.duration,
            warmup: self.warmup,
            request_interval: self.request_interval,
            io_bytes: self.io_size_bytes,
            exec_mean: self.exec_mean,
            cpu_max: self.cpu_max,
            capacity: self.capacity,
            density: self.density,
            request_types: Some(self.request_types.request_types()),
            ..SimConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_covers_all_requests() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.request_types.request_types().len(), 36);
        assert_eq!(c.sim_config(30).request_types.unwrap().len(), 36);
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut c = ExperimentConfig::default();
        c.apply(&Overrides { seeds: vec![9], policies: vec![PolicySpec::Ran], io_size: Some(1.28e6), cpu_max: Some(3) });
        assert_eq!((c.seeds.as_slice(), c.policies.as_slice(), c.io_size_bytes, c.cpu_max), (&[9][..], &[PolicySpec::Ran][..], 1.28e6, 3));
    }
}
