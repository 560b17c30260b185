//! Files emitted by a run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.json";
pub const TIMING: &str = "timing.log";
pub const PHASE: &str = "phase.json";
pub const SOLVE: &str = "solve.json";
pub const RATE_SCAN: &str = "rate_scan.csv";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const TAIL_RATES: &str = "tail_rates.csv";
pub const VERIFY: &str = "verify.json";

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(name))?)?)
}

pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(dir.join(name))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// Provenance of a run; wall-clock time lives in `timing.log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub mode: String,
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<FileDigest>,
}

/// Digests of every emitted file except the manifest and the timing log, sorted by name.
pub fn digests(dir: &Path) -> Result<Vec<FileDigest>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == MANIFEST || name == TIMING || !entry.file_type()?.is_file() {
            continue;
        }
        out.push(FileDigest {
            sha256: sha256_hex(&fs::read(entry.path())?),
            name,
        });
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}
