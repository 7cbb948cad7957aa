//! Versioned JSON envelopes for stage hand-offs, written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

pub const KIND_LOAD_CHECK: &str = "load_check";
pub const KIND_SCORES: &str = "score_set";
pub const KIND_QUBO: &str = "qubo";
pub const KIND_SOLVE: &str = "solve_result";
pub const KIND_SELECTION: &str = "selection";
pub const KIND_REPORT: &str = "evaluation_report";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed artifact: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: expected a {expected} artifact, found {found}")]
    WrongKind {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    Version { path: PathBuf, found: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub kind: String,
    pub data: T,
}

/// Pretty JSON of `{schema_version, kind, data}` with a trailing newline.
pub fn to_json<T: Serialize>(kind: &str, data: &T) -> Vec<u8> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        data,
    };
    let mut bytes = serde_json::to_vec_pretty(&env).expect("artifact types serialise");
    bytes.push(b'\n');
    bytes
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let io = |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let file_name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, ArtifactError> {
    fs::read(path).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Decode an envelope of the expected kind.
pub fn from_json<T: DeserializeOwned>(path: &Path, bytes: &[u8], kind: &str) -> Result<T, ArtifactError> {
    let malformed = |e: serde_json::Error| ArtifactError::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let head: Envelope<serde_json::Value> = serde_json::from_slice(bytes).map_err(malformed)?;
    if head.schema_version != SCHEMA_VERSION {
        return Err(ArtifactError::Version {
            path: path.to_path_buf(),
            found: head.schema_version,
        });
    }
    if head.kind != kind {
        return Err(ArtifactError::WrongKind {
            path: path.to_path_buf(),
            expected: kind.to_string(),
            found: head.kind,
        });
    }
    T::deserialize(head.data).map_err(malformed)
}

pub fn read_envelope<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T, ArtifactError> {
    from_json(path, &read_bytes(path)?, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_atomic(&p, &to_json("thing", &vec![1.5, 2.0])).unwrap();
        let v: Vec<f64> = read_envelope(&p, "thing").unwrap();
        assert_eq!(v, vec![1.5, 2.0]);
        assert!(matches!(read_envelope::<Vec<f64>>(&p, "other"), Err(ArtifactError::WrongKind { .. })));
        // no temporary file is left behind
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn version_and_garbage() {
        let p = Path::new("x.json");
        let bad = br#"{"schema_version": 2, "kind": "k", "data": 1}"#;
        assert!(matches!(from_json::<u32>(p, bad, "k"), Err(ArtifactError::Version { found: 2, .. })));
        assert!(matches!(from_json::<u32>(p, b"nope", "k"), Err(ArtifactError::Malformed { .. })));
    }
}
