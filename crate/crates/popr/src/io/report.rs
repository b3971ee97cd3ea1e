//! Result artifacts: versioned JSON plus long-format CSV tables ready for
//! plotting.
//!
//! CSV floats use the shortest round-trip representation, so re-parsing a
//! table reproduces the exact values.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::IoError;
use crate::analysis::{PairwiseMatrix, RankingReport};
use crate::sampler::PosteriorSamples;

/// One row per `(policy, sample)`: `policy_id,sample_index,theta`.
pub fn samples_csv(all: &[PosteriorSamples]) -> String {
    let mut out = String::from("policy_id,sample_index,theta\n");
    for posterior in all {
        for (i, theta) in posterior.samples.iter().enumerate() {
            out.push_str(&format!("{},{},{:?}\n", posterior.policy_id, i, theta));
        }
    }
    out
}

/// One row per ordered pair, including the diagonal:
/// `policy_k,policy_l,probability`.
pub fn pairwise_csv(matrix: &PairwiseMatrix) -> String {
    let mut out = String::from("policy_k,policy_l,probability\n");
    for (i, k) in matrix.policy_ids.iter().enumerate() {
        for (j, l) in matrix.policy_ids.iter().enumerate() {
            out.push_str(&format!("{},{},{:?}\n", k, l, matrix.probabilities[i][j]));
        }
    }
    out
}

/// One row per policy, best first: `rank,policy_id,score`.
pub fn ranking_csv(report: &RankingReport) -> String {
    let mut out = String::from("rank,policy_id,score\n");
    for (rank, (id, score)) in report.scores.iter().enumerate() {
        out.push_str(&format!("{},{},{:?}\n", rank + 1, id, score));
    }
    out
}

/// Write pretty-printed JSON (atomically), with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::Malformed { path: path.to_path_buf(), line: 0, detail: e.to_string() })?;
    text.push('\n');
    super::write_atomic(path, text.as_bytes())
}

/// Read a JSON artifact back.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let contents = std::fs::read_to_string(path)
        .map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&contents).map_err(|e| IoError::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        detail: e.to_string(),
    })
}

/// Write a text artifact (atomically).
pub fn write_text(path: &Path, contents: &str) -> Result<(), IoError> {
    super::write_atomic(path, contents.as_bytes())
}
