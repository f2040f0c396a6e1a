//! Run persistence: in-memory outputs, content hashes and the manifest
//! written next to them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ConfigEntry, LabConfig};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// A named invariant evaluated during a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything a subcommand produced, before anything touches the disk.
#[derive(Debug, Default)]
pub struct Outcome {
    pub seed: u64,
    pub config: LabConfig,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<(String, Vec<u8>)>,
    pub checks: Vec<Check>,
    /// Short human summary printed on success.
    pub summary: String,
}

impl Outcome {
    pub fn new(seed: u64, config: LabConfig) -> Self {
        Self {
            seed,
            config,
            ..Self::default()
        }
    }

    /// Reads an input file, recording its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = read_bytes(path)?;
        self.inputs.push(Artifact {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        });
        Ok(bytes)
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<T> {
        let bytes = self.read_input(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn read_jsonl<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<Vec<T>> {
        let bytes = self.read_input(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))
            })
            .collect()
    }

    pub fn emit(&mut self, name: &str, bytes: Vec<u8>) {
        self.outputs.push((name.to_string(), bytes));
    }

    pub fn emit_text(&mut self, name: &str, text: String) {
        self.emit(name, text.into_bytes());
    }

    pub fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
        s.push('\n');
        self.emit_text(name, s);
    }

    pub fn emit_jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) {
        let mut s = String::new();
        for r in rows {
            s.push_str(&serde_json::to_string(r).expect("artifact serializes"));
            s.push('\n');
        }
        self.emit_text(name, s);
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn output_artifacts(&self) -> Vec<Artifact> {
        self.outputs
            .iter()
            .map(|(name, bytes)| Artifact {
                path: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    /// Arguments after the program name; `replay` re-parses these.
    pub args: Vec<String>,
    pub seed: u64,
    pub config: LabConfig,
    pub config_entries: Vec<ConfigEntry>,
    pub inputs: Vec<Artifact>,
    /// Paths relative to the output directory.
    pub outputs: Vec<Artifact>,
    pub checks: Vec<Check>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Stable id from everything that determines the outputs.
pub fn run_id(command: &str, args: &[String], inputs: &[Artifact], config: &LabConfig) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    for a in args {
        h.update([0]);
        h.update(a.as_bytes());
    }
    for i in inputs {
        h.update([1]);
        h.update(i.sha256.as_bytes());
    }
    h.update(serde_json::to_vec(config).expect("config serializes"));
    hex::encode(&h.finalize()[..8])
}

/// Writes every output and the manifest into `dir`.
pub fn persist(dir: &Path, outcome: &Outcome, manifest: &RunManifest) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, bytes) in &outcome.outputs {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(io_err(&p))?;
    }
    let p = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&p, text).map_err(io_err(&p))?;
    Ok(p)
}

/// Nine significant digits, the precision used in every printed table.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..9).contains(&e) {
        format!("{:.*}", (8 - e).max(0) as usize, x)
    } else {
        format!("{x:.8e}")
    }
}

pub fn sig9_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "--".to_string(), sig9)
}
