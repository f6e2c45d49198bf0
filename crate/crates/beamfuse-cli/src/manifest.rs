//! Run manifests: every command records its resolved settings, input
//! hashes, and outputs, so a run directory is reproducible from its
//! manifest alone.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use beamfuse::Result;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub created_unix: u64,
    pub seed: u64,
    pub jobs: usize,
    pub args: BTreeMap<String, String>,
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, jobs: usize) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            seed,
            jobs,
            args: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn arg(&mut self, key: &str, value: impl Display) {
        self.args.insert(key.to_string(), value.to_string());
    }

    pub fn input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        self.input_hashes
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(path.as_ref().display().to_string());
    }

    /// Writes `<out_dir>/<subcommand>.manifest.json`.
    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<()> {
        let path = out_dir.as_ref().join(format!("{}.manifest.json", self.subcommand));
        let json = serde_json::to_string_pretty(self)
            .expect("manifest serializes");
        fs::write(path, json + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}
