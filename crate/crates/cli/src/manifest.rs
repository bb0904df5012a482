//! Output directories with a checksummed run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub command: String,
    pub scalar: Option<&'static str>,
    pub seeds: BTreeMap<String, u64>,
    pub config: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects inputs and writes outputs of one command invocation.
pub struct Run {
    dir: PathBuf,
    base: PathBuf,
    manifest: Manifest,
}

impl Run {
    /// `base` is the directory input paths are reported relative to.
    pub fn new(command: &str, dir: &Path, base: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            base: base.to_path_buf(),
            manifest: Manifest {
                toolkit: "synergy",
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                scalar: None,
                seeds: BTreeMap::new(),
                config: Vec::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    pub fn scalar(&mut self, name: &'static str) {
        self.manifest.scalar = Some(name);
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.to_string(), value);
    }

    pub fn config(&mut self, echo: &[String]) {
        self.manifest.config = echo.to_vec();
    }

    /// Reads an input file, recording its checksum.
    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
        let shown = path.strip_prefix(&self.base).unwrap_or(path).display().to_string();
        if !self.manifest.inputs.iter().any(|d| d.path == shown) {
            self.manifest.inputs.push(FileDigest {
                path: shown,
                sha256: sha256_hex(&bytes),
            });
        }
        String::from_utf8(bytes).map_err(|_| CliError::Runtime(format!("{} is not UTF-8 text", path.display())))
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let contents = contents.as_ref();
        fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(contents),
        });
        Ok(path)
    }

    pub fn finish(self) -> Result<Manifest, CliError> {
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(self.manifest)
    }
}
