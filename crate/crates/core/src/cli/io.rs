//! Artifact envelopes, input digests and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Content hash of an input file. Artifacts written by this tool are hashed
/// without their `wall_time_ms` fields so reruns chain to identical digests.
pub fn digest(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let canonical = match serde_json::from_slice::<Value>(&bytes) {
        Ok(mut doc) if doc.get("tool").and_then(Value::as_str) == Some(env!("CARGO_PKG_NAME")) => {
            strip_timing(&mut doc);
            serde_json::to_vec(&doc)?
        }
        _ => bytes,
    };
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&canonical)),
    })
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("wall_time_ms");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// Wrapper written around every JSON result.
#[derive(Debug, Serialize)]
pub struct Artifact<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub result: T,
}

impl<'a, T: Serialize> Artifact<'a, T> {
    pub fn new(command: &'a str, config: Value, inputs: Vec<InputDigest>, result: T) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            inputs,
            result,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

/// `<dir>/<stem>.registry.csv` next to a data file.
pub fn sibling_registry(data: &Path) -> PathBuf {
    let stem = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    data.with_file_name(format!("{stem}.registry.csv"))
}

/// The `result` of an artifact, or the whole document if it is not wrapped.
pub fn unwrap_result(doc: Value) -> Value {
    match doc {
        Value::Object(mut map) if map.contains_key("result") && map.contains_key("tool") => {
            map.remove("result").unwrap_or(Value::Null)
        }
        other => other,
    }
}
