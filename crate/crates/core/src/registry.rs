//! Append-only run registry.
//!
//! Every attempted training run becomes one JSON line: coordinates in the
//! sweep grid, sampled configuration, resource triple, held-out errors, and
//! a status. Failed runs are recorded with a reason instead of being
//! retried, and a sweep that is re-run simply skips run ids that are
//! already present, so interrupted campaigns resume for free.

use crate::error::{Error, Result};
use crate::model::Arch;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

pub const REGISTRY_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One registry line. Metric fields are `None` for failed runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub v: u32,
    pub run_id: String,
    pub system: String,
    pub arch: Arch,
    pub seed: u64,
    /// Grid coordinates the run was launched from.
    pub epochs: u64,
    pub data_slot: u64,
    pub hidden_slot: usize,
    pub depth_slot: usize,
    /// Sampled configuration.
    pub trajectories: f64,
    pub hidden: usize,
    pub depth: usize,
    /// Resource triple: training compute, seconds of data, parameter count.
    pub compute: f64,
    pub data_seconds: f64,
    pub param_count: usize,
    pub nmae: Option<f64>,
    pub nmse: Option<f64>,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

impl Outcome {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// JSONL-backed registry with serialized appends. The file is opened in
/// append mode, so concurrent writers from one process interleave whole
/// lines only.
pub struct Registry {
    path: PathBuf,
    writer: Mutex<File>,
}

impl Registry {
    /// Open or create the backing file.
    pub fn open(path: &Path) -> Result<Registry> {
        let writer = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Registry { path: path.to_path_buf(), writer: Mutex::new(writer) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append one record as a single line.
    pub fn append(&self, outcome: &Outcome) -> Result<()> {
        let mut line = serde_json::to_string(outcome)?;
        line.push('\n');
        let mut file = self.writer.lock().expect("registry writer poisoned");
        file.write_all(line.as_bytes())?;
        Ok(())
    }

    /// Load all complete records. A trailing line without a newline (a
    /// crashed writer) is ignored; malformed complete lines are errors.
    pub fn load(&self) -> Result<Vec<Outcome>> {
        load_outcomes(&self.path)
    }

    /// Run ids already present, regardless of status.
    pub fn existing_ids(&self) -> Result<HashSet<String>> {
        Ok(self.load()?.into_iter().map(|o| o.run_id).collect())
    }
}

/// Read a registry file without opening it for appends.
pub fn load_outcomes(path: &Path) -> Result<Vec<Outcome>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut lineno = 0usize;
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        lineno += 1;
        if !line.ends_with('\n') {
            // Torn final line from an interrupted writer; the run it
            // described will simply be redone.
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let outcome: Outcome = serde_json::from_str(line.trim_end()).map_err(|e| {
            Error::MalformedFile {
                path: path.display().to_string(),
                detail: format!("line {lineno}: {e}"),
            }
        })?;
        if outcome.v != REGISTRY_VERSION {
            return Err(Error::MalformedFile {
                path: path.display().to_string(),
                detail: format!("line {lineno}: unsupported version {}", outcome.v),
            });
        }
        out.push(outcome);
    }
    Ok(out)
}

/// Which resource axis to read off an outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Compute,
    Data,
    Model,
}

impl Resource {
    pub const ALL: [Resource; 3] = [Resource::Compute, Resource::Data, Resource::Model];

    pub fn as_str(&self) -> &'static str {
        match self {
            Resource::Compute => "compute",
            Resource::Data => "data",
            Resource::Model => "model",
        }
    }

    pub fn of(&self, o: &Outcome) -> f64 {
        match self {
            Resource::Compute => o.compute,
            Resource::Data => o.data_seconds,
            Resource::Model => o.param_count as f64,
        }
    }

    /// Conventional variable letter for printed formulas.
    pub fn symbol(&self) -> char {
        match self {
            Resource::Compute => 'c',
            Resource::Data => 'd',
            Resource::Model => 'p',
        }
    }
}

impl std::fmt::Display for Resource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Resource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compute" => Ok(Resource::Compute),
            "data" => Ok(Resource::Data),
            "model" => Ok(Resource::Model),
            other => Err(Error::invalid(format!(
                "unknown resource {other:?} (expected compute, data, or model)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    Nmae,
    Nmse,
}

impl ErrorMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorMetric::Nmae => "nmae",
            ErrorMetric::Nmse => "nmse",
        }
    }

    pub fn of(&self, o: &Outcome) -> Option<f64> {
        match self {
            ErrorMetric::Nmae => o.nmae,
            ErrorMetric::Nmse => o.nmse,
        }
    }
}

impl std::fmt::Display for ErrorMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ErrorMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nmae" => Ok(ErrorMetric::Nmae),
            "nmse" => Ok(ErrorMetric::Nmse),
            other => Err(Error::invalid(format!(
                "unknown error metric {other:?} (expected nmae or nmse)"
            ))),
        }
    }
}

/// Optional restriction of a registry query.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutcomeFilter {
    pub system: Option<String>,
    pub arch: Option<Arch>,
}

impl OutcomeFilter {
    pub fn matches(&self, o: &Outcome) -> bool {
        self.system.as_deref().is_none_or(|s| s == o.system)
            && self.arch.is_none_or(|a| a == o.arch)
    }

    pub fn describe(&self) -> String {
        match (&self.system, &self.arch) {
            (None, None) => "all runs".to_string(),
            (Some(s), None) => format!("system {s}"),
            (None, Some(a)) => format!("architecture {a}"),
            (Some(s), Some(a)) => format!("system {s}, architecture {a}"),
        }
    }
}

/// Project successful outcomes onto `(resource, error)` pairs, sorted by
/// resource (ties kept in input order). Fails if the selection is empty.
pub fn collect(
    outcomes: &[Outcome],
    resource: Resource,
    metric: ErrorMetric,
    filter: &OutcomeFilter,
) -> Result<Vec<(f64, f64)>> {
    let mut pairs: Vec<(f64, f64)> = outcomes
        .iter()
        .filter(|o| o.is_ok() && filter.matches(o))
        .filter_map(|o| metric.of(o).map(|e| (resource.of(o), e)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no successful runs for {} ({})",
            filter.describe(),
            resource
        )));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("non-finite resource"));
    Ok(pairs)
}
