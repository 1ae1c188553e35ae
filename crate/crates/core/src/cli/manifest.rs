use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsutil::{read_string, write_string};

pub const MANIFEST_FILE: &str = "manifest.json";

/// One file and the SHA-256 of its contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance of one subcommand invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Configuration in effect, as `key = value` text.
    pub config: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String]) -> Self {
        Self {
            command: command.to_string(),
            args: args.to_vec(),
            config: String::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn add_inputs(&mut self, path: &Path) -> Result<()> {
        self.inputs.extend(hash_path(path)?);
        Ok(())
    }

    pub fn add_outputs(&mut self, path: &Path) -> Result<()> {
        self.outputs.extend(hash_path(path)?);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e.to_string()))?;
        write_string(path, &(text + "\n"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_string(path)?).map_err(|e| Error::parse(path, e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Hashes a file, or every file under a directory in sorted order. Manifests
/// themselves are skipped.
pub fn hash_path(path: &Path) -> Result<Vec<FileHash>> {
    if path.is_file() {
        return Ok(vec![hash_file(path)?]);
    }
    let mut files = Vec::new();
    collect(path, &mut files)?;
    files.sort();
    files
        .iter()
        .filter(|p| !p.to_string_lossy().ends_with(MANIFEST_FILE))
        .map(|p| hash_file(p))
        .collect()
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}
