//! Run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> anyhow::Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

/// What a run read and wrote, and the options that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Resolved options after merging flags and config file.
    pub options: Value,
    /// SHA-256 of the canonical JSON of `options`.
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, FileRecord>,
    pub outputs: BTreeMap<String, FileRecord>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Collects inputs and outputs while a command runs.
#[derive(Debug)]
pub struct Recorder {
    command: String,
    options: Value,
    seed: Option<u64>,
    inputs: BTreeMap<String, FileRecord>,
    outputs: BTreeMap<String, FileRecord>,
}

impl Recorder {
    pub fn new(command: &str, options: &impl Serialize, seed: Option<u64>) -> anyhow::Result<Self> {
        Ok(Self {
            command: command.to_string(),
            options: serde_json::to_value(options)?,
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) -> anyhow::Result<()> {
        self.inputs.insert(name.to_string(), FileRecord::of(path)?);
        Ok(())
    }

    pub fn input_hash(&self, name: &str) -> Option<&str> {
        self.inputs.get(name).map(|r| r.sha256.as_str())
    }

    pub fn output(&mut self, name: &str, path: &Path) -> anyhow::Result<()> {
        self.outputs.insert(name.to_string(), FileRecord::of(path)?);
        Ok(())
    }

    pub fn finish(self) -> anyhow::Result<Manifest> {
        let canonical = serde_json::to_string(&self.options)?;
        Ok(Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: hex::encode(Sha256::digest(canonical.as_bytes())),
            options: self.options,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
        })
    }

    /// Writes the manifest to `path`, or next to `primary` when `path` is `None`.
    pub fn write(self, path: Option<&Path>, primary: &Path) -> anyhow::Result<PathBuf> {
        let target = path.map(Path::to_path_buf).unwrap_or_else(|| default_manifest_path(primary));
        let manifest = self.finish()?;
        std::fs::write(&target, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing manifest {}", target.display()))?;
        eprintln!("manifest written to {}", target.display());
        Ok(target)
    }
}

pub fn default_manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

pub fn read_manifest(path: &Path) -> anyhow::Result<Manifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}
