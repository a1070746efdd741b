//! Run manifest: what produced the files in an output directory.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// sha256 of the canonical config text.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<OutputFile>,
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files into one directory and records their digests.
pub struct OutDir {
    root: PathBuf,
    written: Vec<OutputFile>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(root).map_err(|e| Failure::config(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `name` must be a plain file name.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let p = Path::new(name);
        if p.components().count() != 1 || p.file_name().is_none() {
            return Err(Failure::config(format!("output name {name:?} must be a plain file name")));
        }
        let target = self.root.join(p);
        std::fs::write(&target, bytes).map_err(|e| Failure::experiment(format!("cannot write {}: {e}", target.display())))?;
        self.written.retain(|o| o.path != name);
        self.written.push(OutputFile {
            path: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::experiment(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(mut self, command: &str, canonical_config: &str, seed: Option<u64>, started: u64) -> Result<(), Failure> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: sha256_hex(canonical_config.as_bytes()),
            seed,
            started_unix: started,
            finished_unix: now(),
            outputs: std::mem::take(&mut self.written),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::experiment(e.to_string()))?;
        text.push('\n');
        let target = self.root.join("manifest.json");
        std::fs::write(&target, text).map_err(|e| Failure::experiment(format!("cannot write {}: {e}", target.display())))
    }
}
