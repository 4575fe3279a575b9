use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::sha256_hex;
use crate::error::CliResult;

/// Files produced by a command, held in memory until the command succeeds.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(muonlab::Error::from)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub files: Vec<FileEntry>,
}

/// Writes every output plus `manifest.json` under `dir`.
pub fn write_outputs(
    dir: &Path,
    command: &str,
    config_digest: String,
    config: Value,
    seeds: Vec<u64>,
    outputs: Outputs,
) -> CliResult<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(outputs.files.len());
    for (name, bytes) in outputs.files {
        let path = dir.join(&name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, &bytes)?;
        files.push(FileEntry {
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
            path: name,
        });
    }
    let manifest = RunManifest {
        command: command.to_string(),
        config_digest,
        config,
        seeds,
        output_dir: dir.to_path_buf(),
        files,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(muonlab::Error::from)?;
    bytes.push(b'\n');
    std::fs::write(dir.join("manifest.json"), bytes)?;
    Ok(manifest)
}
