use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thermwatch::{Error, ExperimentConfig, Result};

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a ExperimentConfig,
    outputs: Vec<Output>,
}

#[derive(Serialize)]
struct Output {
    file: String,
    sha256: String,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    Ok(hex_digest(&serde_json::to_vec(config)?))
}

/// Writes `manifest.<command>.json` next to the outputs; returns its path.
pub fn write(dir: &Path, command: &str, config: &ExperimentConfig, files: &[PathBuf]) -> Result<PathBuf> {
    let outputs = files
        .iter()
        .map(|path| {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let file = path.strip_prefix(dir).unwrap_or(path).display().to_string();
            Ok(Output {
                file,
                sha256: hex_digest(&bytes),
            })
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: config.seed,
        config_sha256: config_hash(config)?,
        config,
        outputs,
    };
    let path = dir.join(format!("manifest.{command}.json"));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
