//! Per-command manifests: resolved config, seeds and content hashes of every
//! input and output. No timestamps, so reruns produce identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sip_core::Result;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory when inside it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    /// Wall-clock files; excluded from hashing.
    pub unhashed: Vec<String>,
    pub config: RunConfig,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn entry(out: &Path, p: &Path) -> Result<FileEntry> {
    let shown = p.strip_prefix(out).unwrap_or(p);
    Ok(FileEntry {
        path: shown.display().to_string(),
        sha256: sha256_file(p)?,
    })
}

impl Manifest {
    pub fn build(
        command: &str,
        cfg: &RunConfig,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        unhashed: &[PathBuf],
    ) -> Result<Self> {
        let out = cfg.out.as_path();
        let name = |p: &PathBuf| p.strip_prefix(out).unwrap_or(p).display().to_string();
        Ok(Manifest {
            command: command.into(),
            seed: cfg.seed,
            inputs: inputs
                .iter()
                .map(|p| entry(out, p))
                .collect::<Result<_>>()?,
            outputs: outputs
                .iter()
                .map(|p| entry(out, p))
                .collect::<Result<_>>()?,
            unhashed: unhashed.iter().map(name).collect(),
            config: cfg.clone(),
        })
    }

    pub fn path(out: &Path, command: &str) -> PathBuf {
        out.join(format!("manifest-{command}.toml"))
    }

    pub fn write(&self) -> Result<PathBuf> {
        let p = Self::path(&self.config.out, &self.command);
        fs::write(&p, toml::to_string(self).expect("manifest serializes"))?;
        Ok(p)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| sip_core::Error::Format(format!("manifest `{}`: {e}", path.display())))
    }
}
