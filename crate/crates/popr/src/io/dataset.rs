//! Newline-delimited JSON dataset files.
//!
//! Line 1 is the header `{"version":1,"action_space":{...}}`; every further
//! line is one trajectory. The writer emits canonical field order
//! (`s`, `a`, `r`, `s2`), so reading a written file and writing it again is
//! byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::core::{Action, ActionSpace, ExpertDataset, Step, Trajectory};

pub const DATASET_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u64,
    action_space: ActionSpace,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRecord {
    s: Vec<f64>,
    a: Action,
    r: Option<f64>,
    s2: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRecord {
    steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

/// Serialize a dataset to the newline-delimited format.
pub fn dataset_to_string(dataset: &ExpertDataset) -> String {
    let header = Header { version: DATASET_VERSION, action_space: *dataset.action_space() };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for trajectory in dataset.trajectories() {
        let record = TrajectoryRecord {
            steps: trajectory
                .steps()
                .iter()
                .map(|step| StepRecord {
                    s: step.state.clone(),
                    a: step.action.clone(),
                    r: step.reward,
                    s2: step.next_state.clone(),
                })
                .collect(),
            meta: None,
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Write a dataset file (atomically).
pub fn write_dataset(dataset: &ExpertDataset, path: &Path) -> Result<(), IoError> {
    super::write_atomic(path, dataset_to_string(dataset).as_bytes())
}

/// Parse the newline-delimited format, validating every invariant and
/// reporting 1-based line numbers on failure.
pub fn parse_dataset(contents: &str, path: &Path) -> Result<ExpertDataset, IoError> {
    let mut lines = contents.lines().enumerate();
    let header: Header = match lines.next() {
        Some((_, first)) => serde_json::from_str(first)
            .map_err(|_| IoError::MissingHeader { path: path.to_path_buf() })?,
        None => return Err(IoError::MissingHeader { path: path.to_path_buf() }),
    };
    if header.version != DATASET_VERSION {
        return Err(IoError::UnsupportedVersion {
            path: path.to_path_buf(),
            line: 1,
            found: header.version,
            supported: DATASET_VERSION,
        });
    }

    let mut trajectories = Vec::new();
    let mut state_dim: Option<usize> = None;
    for (index, line) in lines {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryRecord = serde_json::from_str(line).map_err(|e| IoError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            detail: e.to_string(),
        })?;
        let steps: Vec<Step> = record
            .steps
            .into_iter()
            .map(|r| Step { state: r.s, action: r.a, reward: r.r, next_state: r.s2 })
            .collect();
        let trajectory =
            Trajectory::new(steps, &header.action_space).map_err(|source| IoError::InvalidRecord {
                path: path.to_path_buf(),
                line: line_no,
                source,
            })?;
        match state_dim {
            None => state_dim = Some(trajectory.state_dim()),
            Some(dim) if dim != trajectory.state_dim() => {
                return Err(IoError::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    detail: format!(
                        "state dimension {} differs from earlier trajectories ({dim})",
                        trajectory.state_dim()
                    ),
                });
            }
            _ => {}
        }
        trajectories.push(trajectory);
    }

    ExpertDataset::new(trajectories, header.action_space).map_err(|source| IoError::InvalidRecord {
        path: path.to_path_buf(),
        line: 1,
        source,
    })
}

/// Read and validate a dataset file.
pub fn read_dataset(path: &Path) -> Result<ExpertDataset, IoError> {
    let contents = std::fs::read_to_string(path)
        .map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    parse_dataset(&contents, path)
}
