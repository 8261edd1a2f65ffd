//! Run manifests: every output directory carries one JSON manifest tying
//! outputs to the exact spec, cohort and seed that produced them, with
//! reproducible content hashes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// 64-bit FNV-1a over raw bytes: stable, dependency-free content digest.
pub fn content_hash(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn hash_file(path: &Path) -> Result<u64> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(content_hash(&bytes))
}

/// Digest of a directory tree: hash of `(sorted relative path, content
/// hash)` pairs, so renames and edits both change it.
pub fn hash_dir(dir: &Path) -> Result<u64> {
    let mut entries = Vec::new();
    collect_files(dir, dir, &mut entries)?;
    entries.sort();
    let mut acc = Vec::new();
    for rel in entries {
        let hash = hash_file(&dir.join(&rel))?;
        acc.extend_from_slice(rel.to_string_lossy().as_bytes());
        acc.extend_from_slice(&hash.to_le_bytes());
    }
    Ok(content_hash(&acc))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let read = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in read {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).unwrap().to_path_buf());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    /// FNV-1a digest of the spec file bytes, hex.
    pub spec_hash: String,
    /// FNV-1a digest of the cohort directory, hex.
    pub cohort_hash: String,
    /// RFC 3339 UTC creation timestamp; the only field two identical runs
    /// may differ in.
    pub created: String,
    /// Output files relative to the manifest's directory, sorted.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(seed: u64, spec_hash: u64, cohort_hash: u64, mut outputs: Vec<String>) -> Self {
        outputs.sort();
        RunManifest {
            schema_version: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            spec_hash: format!("{spec_hash:016x}"),
            cohort_hash: format!("{cohort_hash:016x}"),
            created: timestamp(),
            outputs,
        }
    }

    /// Equality ignoring the creation timestamp.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.created = String::new();
        b.created = String::new();
        a == b
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Invariant(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(&path, 0, format!("manifest: {e}")))
    }
}

/// RFC 3339 UTC now, computed from the system clock without a chrono
/// dependency.
fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let days = secs / 86_400;
    let (year, month, day) = civil_from_days(days as i64);
    let rem = secs % 86_400;
    format!(
        "{year:04}-{month:02}-{day:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        (rem % 3600) / 60,
        rem % 60
    )
}

/// Days-since-epoch to (year, month, day), Howard Hinnant's civil-from-days
/// algorithm.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}
