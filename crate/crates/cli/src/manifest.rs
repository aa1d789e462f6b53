use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one command invocation and everything it wrote.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExperimentManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes files under one directory and keeps their hashes.
#[derive(Debug)]
pub struct Outputs {
    root: PathBuf,
    files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Outputs {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Outputs {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.register_bytes(rel, bytes);
        Ok(())
    }

    /// Registers a file some other component already wrote.
    pub fn register_existing(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.root.join(rel))?;
        self.register_bytes(rel, &bytes);
        Ok(())
    }

    fn register_bytes(&mut self, rel: &str, bytes: &[u8]) {
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }

    /// Writes `manifest.json` listing every registered file.
    pub fn finish(
        self,
        command: &str,
        config_path: Option<&Path>,
        seeds: Vec<u64>,
    ) -> Result<ExperimentManifest> {
        let mut files = self.files;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = ExperimentManifest {
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            seeds,
            out_dir: self.root.display().to_string(),
            files,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(self.root.join(MANIFEST_NAME), json + "\n")?;
        Ok(manifest)
    }
}
