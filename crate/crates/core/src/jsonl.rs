//! One-JSON-object-per-line storage.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("serialize: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl JsonlError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        JsonlError::Io { path: path.to_path_buf(), source }
    }
}

/// Reads every non-empty line of `path` as a `T`. Errors carry the 1-based
/// line number of the first bad record.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    read_raw(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|source| JsonlError::Parse {
                path: path.to_path_buf(),
                line,
                source,
            })
        })
        .collect()
}

/// Non-empty lines of `path` with their 1-based line numbers.
pub fn read_raw(path: &Path) -> Result<Vec<(usize, String)>, JsonlError> {
    let file = fs::File::open(path).map_err(|e| JsonlError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| JsonlError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn to_string<T: Serialize>(records: &[T]) -> Result<String, JsonlError> {
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(r)?);
        buf.push('\n');
    }
    Ok(buf)
}

/// Writes `records` to `path`, replacing it atomically.
pub fn write<T: Serialize>(path: &Path, records: &[T]) -> Result<(), JsonlError> {
    write_bytes(path, to_string(records)?.as_bytes())
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), JsonlError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| JsonlError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| JsonlError::io(&tmp, e))?;
    f.sync_all().map_err(|e| JsonlError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| JsonlError::io(path, e))
}
