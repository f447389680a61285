//! Per-run provenance records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_DIR: &str = "manifests";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// One record per command invocation. Written once, on success, and never
/// overwritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<String>,
    /// Seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Runs `f` and records its wall-clock time under `phase`.
    pub fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(phase.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    /// Writes `out_dir/manifests/NNNN-<command>.json` under the next free
    /// number. The file appears atomically and existing manifests are never
    /// replaced.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let dir = out_dir.join(MANIFEST_DIR);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let body = serde_json::to_string_pretty(self)?;
        let tmp = dir.join(format!(".{}-{}.tmp", self.command, std::process::id()));
        std::fs::write(&tmp, body).with_context(|| format!("writing {}", tmp.display()))?;
        let mut n = list(out_dir)?.len() + 1;
        loop {
            let target = dir.join(format!("{n:04}-{}.json", self.command));
            match std::fs::hard_link(&tmp, &target) {
                Ok(()) => {
                    std::fs::remove_file(&tmp).ok();
                    return Ok(target);
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => {
                    std::fs::remove_file(&tmp).ok();
                    return Err(e).with_context(|| format!("publishing {}", target.display()));
                }
            }
        }
    }
}

/// Manifest files under `out_dir`, oldest first.
pub fn list(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = out_dir.join(MANIFEST_DIR);
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}

pub fn read(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
