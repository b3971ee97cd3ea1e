//! Persistence and interop: trajectory dataset files, policy manifests,
//! result artifacts, and the external-policy wire protocol.
//!
//! All file formats are newline-delimited JSON or plain JSON, versioned, and
//! documented byte-exactly in the repository's `FORMAT.md`. Writers go
//! through a temp-file-plus-rename so failures never leave partial output.

pub mod dataset;
pub mod external;
pub mod manifest;
pub mod report;

pub use dataset::{dataset_to_string, parse_dataset, read_dataset, write_dataset, DATASET_VERSION};
pub use external::{external_policy_client, ExternalPolicy, PROTOCOL_VERSION};
pub use manifest::{build_policies, read_manifest, ManifestEntry, PolicyManifest, PolicySpec};
pub use report::{pairwise_csv, ranking_csv, read_json, samples_csv, write_json, write_text};

use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::core::CoreError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    Malformed { path: PathBuf, line: usize, detail: String },
    #[error("{path}:1: missing or malformed dataset header")]
    MissingHeader { path: PathBuf },
    #[error("{path}:{line}: unsupported format version {found} (reader supports {supported})")]
    UnsupportedVersion { path: PathBuf, line: usize, found: u64, supported: u64 },
    #[error("{path}:{line}: invalid record: {source}")]
    InvalidRecord {
        path: PathBuf,
        line: usize,
        #[source]
        source: CoreError,
    },
    #[error("invalid policy manifest: {detail}")]
    Manifest { detail: String },
    #[error("failed to spawn external policy command {command:?}: {source}")]
    Spawn {
        command: Vec<String>,
        #[source]
        source: std::io::Error,
    },
    #[error("external policy handshake failed: {detail}")]
    Handshake { detail: String },
    #[error("external policy did not respond within {timeout_ms} ms")]
    Timeout { timeout_ms: u64 },
    #[error("external policy protocol error: {detail}")]
    Protocol { detail: String },
}

/// Write `bytes` to `path` atomically: a temp file in the same directory is
/// renamed over the target only after a complete write.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, bytes)
        .map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    std::fs::rename(&tmp, path).map_err(|source| {
        let _ = std::fs::remove_file(&tmp);
        IoError::Io { path: path.to_path_buf(), source }
    })
}

/// Stage several files and publish them only if every write succeeds.
pub fn write_all_atomic(files: &[(PathBuf, Vec<u8>)]) -> Result<(), IoError> {
    let mut staged: Vec<(PathBuf, &PathBuf)> = Vec::with_capacity(files.len());
    let cleanup = |staged: &[(PathBuf, &PathBuf)]| {
        for (tmp, _) in staged {
            let _ = std::fs::remove_file(tmp);
        }
    };
    for (i, (path, bytes)) in files.iter().enumerate() {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let tmp = dir.join(format!(".{name}.tmp-{}-{i}", std::process::id()));
        if let Err(source) = std::fs::write(&tmp, bytes) {
            cleanup(&staged);
            return Err(IoError::Io { path: path.clone(), source });
        }
        staged.push((tmp, path));
    }
    for (tmp, path) in &staged {
        if let Err(source) = std::fs::rename(tmp, path) {
            cleanup(&staged);
            return Err(IoError::Io { path: (*path).clone(), source });
        }
    }
    Ok(())
}
