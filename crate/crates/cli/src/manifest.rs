//! `manifest.json`, written next to the outputs of every run.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{hex, PipelineConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: PipelineConfig,
    pub outputs: Vec<OutputRecord>,
    pub summary: Value,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Records `outputs` (file names inside `dir`) with their digests.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &PipelineConfig,
    outputs: &[String],
    summary: Value,
) -> Result<()> {
    let outputs = outputs
        .iter()
        .map(|file| {
            Ok(OutputRecord {
                file: file.clone(),
                sha256: file_sha256(&dir.join(file))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_owned(),
        seed: config.seed,
        config_sha256: config.hash(),
        config: config.clone(),
        outputs,
        summary,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
