//! Run manifests: what was run, with which settings and inputs.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    /// Seconds since the Unix epoch at start.
    pub started: u64,
    pub seconds: f64,
    /// Per-chain sampling seconds, for fits.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub chains: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub seed: Option<u64>,
    /// Fully resolved settings after flags, config file and defaults.
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub timing: Timing,
}

pub struct Recorder {
    subcommand: &'static str,
    started_wall: u64,
    started: Instant,
    inputs: Vec<InputDigest>,
}

impl Recorder {
    pub fn start(subcommand: &'static str) -> Self {
        Recorder {
            subcommand,
            started_wall: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            started: Instant::now(),
            inputs: Vec::new(),
        }
    }

    pub fn input_file(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    /// Digests every regular file of a run directory except manifests, in
    /// name order.
    pub fn input_dir(&mut self, dir: &Path) -> Result<(), CliError> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && !is_manifest(p))
            .collect();
        files.sort();
        for f in files {
            self.input_file(&f)?;
        }
        Ok(())
    }

    pub fn finish(self, seed: Option<u64>, config: &impl Serialize, outputs: Vec<String>, chains: Vec<f64>) -> Result<RunManifest, CliError> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            seed,
            config: serde_json::to_value(config)?,
            inputs: self.inputs,
            outputs,
            timing: Timing {
                started: self.started_wall,
                seconds: self.started.elapsed().as_secs_f64(),
                chains,
            },
        })
    }
}

fn is_manifest(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n == "manifest.json" || n.ends_with(".manifest.json"))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Manifest location for an output: `manifest.json` inside a directory
/// output, `<file>.manifest.json` beside a file output.
pub fn manifest_path(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join("manifest.json")
    } else {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

pub fn write(manifest: &RunManifest, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
