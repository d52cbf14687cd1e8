//! Versioned artifact files.
//!
//! JSON and JSONL files carry a `format_version` field on every object; CSV
//! files start with a `# format_version=N` line.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domains::{Plan, ProblemInstance, StateId};
use crate::FORMAT_VERSION;

#[derive(Debug, thiserror::Error)]
#[error("{path}:{line}: format_version {found:?}, expected {expected}")]
pub struct FormatError {
    pub path: PathBuf,
    pub line: usize,
    pub expected: u32,
    pub found: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessIoError {
    #[error("missing input artifact {path} (produce it with `{producer}` first)")]
    MissingArtifact {
        path: PathBuf,
        producer: &'static str,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessIoError + '_ {
    move |source| HarnessIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Fails with [`HarnessIoError::MissingArtifact`] unless `path` exists.
pub fn require(path: &Path, producer: &'static str) -> Result<(), HarnessIoError> {
    if path.exists() {
        Ok(())
    } else {
        Err(HarnessIoError::MissingArtifact {
            path: path.to_path_buf(),
            producer,
        })
    }
}

fn create(path: &Path) -> Result<fs::File, HarnessIoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::File::create(path).map_err(io_err(path))
}

fn check_version(path: &Path, line: usize, value: &serde_json::Value) -> Result<(), FormatError> {
    let found = value.get("format_version").and_then(|v| v.as_u64());
    if found == Some(FORMAT_VERSION as u64) {
        Ok(())
    } else {
        Err(FormatError {
            path: path.to_path_buf(),
            line,
            expected: FORMAT_VERSION,
            found,
        })
    }
}

fn parse_versioned<T: DeserializeOwned>(
    path: &Path,
    line: usize,
    text: &str,
) -> Result<T, HarnessIoError> {
    let json_err = |source| HarnessIoError::Json {
        path: path.to_path_buf(),
        line,
        source,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    check_version(path, line, &value)?;
    T::deserialize(value).map_err(json_err)
}

/// Reads one versioned JSON object.
pub fn read_json<T: DeserializeOwned>(
    path: &Path,
    producer: &'static str,
) -> Result<T, HarnessIoError> {
    require(path, producer)?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_versioned(path, 1, &text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessIoError> {
    let mut f = create(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|source| HarnessIoError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    writeln!(f, "{text}").map_err(io_err(path))
}

/// Reads every non-blank line of a JSONL file, checking versions.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    producer: &'static str,
) -> Result<Vec<T>, HarnessIoError> {
    require(path, producer)?;
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_versioned(path, k + 1, &line)?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessIoError> {
    let mut w = std::io::BufWriter::new(create(path)?);
    for (k, item) in items.iter().enumerate() {
        let text = serde_json::to_string(item).map_err(|source| HarnessIoError::Json {
            path: path.to_path_buf(),
            line: k + 1,
            source,
        })?;
        writeln!(w, "{text}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn version_line() -> String {
    format!("# format_version={FORMAT_VERSION}\n")
}

/// CSV text for `rows` (with header) preceded by the version line.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(version_line().into_bytes());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessIoError> {
    let text = csv_string(rows).map_err(|source| HarnessIoError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    write_text(path, &text)
}

/// Writes `text` unchanged. For payloads that carry their own version field.
pub fn write_raw(path: &Path, text: &str) -> Result<(), HarnessIoError> {
    create(path)?
        .write_all(text.as_bytes())
        .map_err(io_err(path))
}

/// Writes plain text, prefixed by the version line unless it already has one.
pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessIoError> {
    let mut f = create(path)?;
    if !text.starts_with("# format_version=") {
        f.write_all(version_line().as_bytes())
            .map_err(io_err(path))?;
    }
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

pub fn read_csv<T: DeserializeOwned>(
    path: &Path,
    producer: &'static str,
) -> Result<Vec<T>, HarnessIoError> {
    require(path, producer)?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let found = first
        .trim()
        .strip_prefix("# format_version=")
        .and_then(|v| v.parse::<u64>().ok());
    if found != Some(FORMAT_VERSION as u64) {
        return Err(FormatError {
            path: path.to_path_buf(),
            line: 1,
            expected: FORMAT_VERSION,
            found,
        }
        .into());
    }
    csv::Reader::from_reader(rest.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|source| HarnessIoError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

/// One line of an instance file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceLine {
    pub format_version: u32,
    pub domain_tag: String,
    pub goal_spec: String,
    pub instance: ProblemInstance,
}

impl InstanceLine {
    pub fn new(instance: ProblemInstance) -> Self {
        InstanceLine {
            format_version: FORMAT_VERSION,
            domain_tag: instance.domain_tag().as_str().to_string(),
            goal_spec: instance.goal_spec(),
            instance,
        }
    }
}

/// One line of a plan file. Enumerated plans share the instance id and
/// differ in `plan_index`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanLine {
    pub format_version: u32,
    pub instance_id: String,
    #[serde(default)]
    pub plan_index: usize,
    pub cost: f64,
    pub length: usize,
    pub states: Vec<StateId>,
}

impl PlanLine {
    pub fn new(instance: &ProblemInstance, plan_index: usize, plan: &Plan) -> Self {
        PlanLine {
            format_version: FORMAT_VERSION,
            instance_id: instance.instance_id.clone(),
            plan_index,
            cost: plan.total_cost,
            length: plan.length(),
            states: plan.states(instance.initial_state),
        }
    }

    /// Rebuilds the plan against `instance`, or `None` if an edge is missing.
    pub fn to_plan(&self, instance: &ProblemInstance) -> Option<Plan> {
        let plan = Plan::from_states(instance, &self.states)?;
        (self.states.first() == Some(&instance.initial_state)).then_some(plan)
    }
}

pub fn read_instances(path: &Path) -> Result<Vec<ProblemInstance>, HarnessIoError> {
    Ok(read_jsonl::<InstanceLine>(path, "generate")?
        .into_iter()
        .map(|l| l.instance)
        .collect())
}

pub fn write_instances(path: &Path, instances: &[ProblemInstance]) -> Result<(), HarnessIoError> {
    let lines: Vec<InstanceLine> = instances.iter().cloned().map(InstanceLine::new).collect();
    write_jsonl(path, &lines)
}
