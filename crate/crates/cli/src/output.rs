//! Artifact writing and the run manifest.

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Component, Path, PathBuf};

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

pub struct Output {
    dir: PathBuf,
    seed: u64,
    command: String,
    config: Value,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Output {
    pub fn new(dir: PathBuf, seed: u64) -> Self {
        Self {
            dir,
            seed,
            command: String::new(),
            config: Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Names the run and stores its resolved parameters for the manifest.
    pub fn begin<T: Serialize>(&mut self, command: &str, params: &T) -> anyhow::Result<()> {
        self.command = command.to_string();
        self.config = serde_json::to_value(params)?;
        Ok(())
    }

    /// Reads an input file and records its hash.
    pub fn read_input(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(FileEntry {
            path: path.display().to_string(),
            sha256: digest(&bytes),
        });
        Ok(bytes)
    }

    pub fn record_input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.read_input(path).map(|_| ())
    }

    /// Writes `bytes` to `name` inside the output directory.
    pub fn write(&mut self, name: &Path, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        if name.as_os_str().is_empty() || name.components().any(|c| !matches!(c, Component::Normal(_))) {
            bail!("output {} must be a relative path inside --out-dir", name.display());
        }
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        self.outputs.push(FileEntry {
            path: name.display().to_string(),
            sha256: digest(bytes),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &Path, value: &T) -> anyhow::Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `<command>.manifest.json` next to the outputs.
    pub fn write_manifest(self) -> anyhow::Result<()> {
        let manifest = json!({
            "kind": "manifest",
            "tool": "asvkit",
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": asvkit::VERSION,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        let name = PathBuf::from(format!("{}.manifest.json", self.command));
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        std::fs::create_dir_all(&self.dir)?;
        std::fs::write(self.dir.join(&name), bytes).with_context(|| format!("writing {}", name.display()))?;
        Ok(())
    }
}
