//! Run manifests: a config snapshot, wall-clock bounds, and a SHA-256
//! checksum for every artifact the run emitted. Written atomically so a
//! crashed run never leaves a half-manifest behind.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    /// Unix timestamps (seconds).
    pub started: u64,
    pub finished: u64,
    /// Artifact file name -> lowercase hex SHA-256 of its bytes.
    pub artifacts: indexmap_compat::Map,
}

/// serde_json's preserve_order map keeps artifact listing deterministic.
mod indexmap_compat {
    pub type Map = serde_json::Map<String, serde_json::Value>;
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("checksumming {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Builds the manifest over `artifacts` (paths inside `out`) and writes
/// `out/manifest.json` via a temp file + rename.
pub fn write_manifest(
    out: &Path,
    command: &str,
    config: &serde_json::Value,
    started: u64,
    artifacts: &[PathBuf],
) -> Result<PathBuf> {
    let mut listed = serde_json::Map::new();
    for artifact in artifacts {
        let name = artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| artifact.display().to_string());
        listed.insert(name, serde_json::Value::String(sha256_file(artifact)?));
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: config.clone(),
        started,
        finished: unix_now(),
        artifacts: listed,
    };
    let path = out.join("manifest.json");
    let tmp = out.join("manifest.json.tmp");
    let json = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    std::fs::write(&tmp, json).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, &path)
        .with_context(|| format!("atomically replacing {}", path.display()))?;
    Ok(path)
}
