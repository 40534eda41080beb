use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliError;
use crate::pipeline::{sha256_hex, Output};

#[derive(Serialize)]
struct Artifact {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    seed: u64,
    config_hash: String,
    artifacts: Vec<Artifact>,
    /// Not part of any hash.
    created_unix: u64,
}

/// Writes `manifest.json` listing every artifact with its digest.
pub fn write(out: &Output, command: &str, seed: u64, config_hash: &str) -> Result<(), CliError> {
    let mut paths: Vec<PathBuf> = out.artifacts.clone();
    paths.sort();
    paths.dedup();
    let mut artifacts = Vec::with_capacity(paths.len());
    for rel in paths {
        let full = out.dir.join(&rel);
        let bytes = std::fs::read(&full).map_err(|e| CliError::io(&full, e))?;
        artifacts.push(Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        tool: "psps",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        seed,
        config_hash: config_hash.to_string(),
        artifacts,
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    let path = out.dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
