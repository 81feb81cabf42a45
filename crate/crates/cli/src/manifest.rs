//! Run manifests: the resolved config plus hashes of every input read.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_file: Option<String>,
    pub config: serde_json::Value,
    pub output_dir: String,
    pub seed: u64,
    /// Input name to lowercase hex sha256.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config_file: Option<&Path>, config: serde_json::Value, output_dir: &Path, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_file: config_file.map(|p| p.display().to_string()),
            config,
            output_dir: output_dir.display().to_string(),
            seed,
            artifacts: BTreeMap::new(),
        }
    }

    pub fn hash_file(&mut self, name: &str, path: &Path) -> CliResult<()> {
        let digest = file_sha256(path)?;
        self.artifacts.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn hash_dir(&mut self, name: &str, dir: &Path) -> CliResult<()> {
        let digest = dir_sha256(dir)?;
        self.artifacts.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_file(&dir.join(FILE_NAME), text)
    }
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            files_under(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Digest of every file below `dir`, keyed by relative path so the result
/// does not depend on directory listing order or location.
pub fn dir_sha256(dir: &Path) -> CliResult<String> {
    let mut files = Vec::new();
    files_under(dir, &mut files).map_err(|e| CliError::usage(format!("cannot list {}: {e}", dir.display())))?;
    let mut entries: Vec<(String, PathBuf)> = files
        .into_iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).expect("listed below dir");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            (key, p)
        })
        .collect();
    entries.sort();
    let mut hasher = Sha256::new();
    for (key, path) in entries {
        let bytes = fs::read(&path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        hasher.update((key.len() as u64).to_le_bytes());
        hasher.update(key.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_file(path: &Path, text: String) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}
