//! Output directories: files, the effective configuration echo and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    /// Hex SHA-256; absent for machine-dependent files (timings).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    pub deterministic: bool,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub files: Vec<ManifestEntry>,
}

/// Collects the files of one command's output directory.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    /// Writes `name` through a temporary file and records it in the manifest.
    pub fn write(&mut self, name: &str, text: &str, deterministic: bool) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!("{name}.tmp"));
        fs::write(&tmp, text).map_err(CliError::io(&tmp))?;
        fs::rename(&tmp, &path).map_err(CliError::io(&path))?;
        self.record(name, text.as_bytes(), deterministic);
        Ok(())
    }

    /// Records a file written by other means.
    pub fn record(&mut self, name: &str, bytes: &[u8], deterministic: bool) {
        self.files.retain(|f| f.path != name);
        self.files.push(ManifestEntry {
            path: name.to_string(),
            sha256: deterministic.then(|| sha256_hex(bytes)),
            deterministic,
        });
    }

    pub fn record_existing(&mut self, name: &str, deterministic: bool) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let bytes = fs::read(&path).map_err(CliError::io(&path))?;
        self.record(name, &bytes, deterministic);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))? + "\n";
        self.write(name, &text, true)
    }

    pub fn write_toml<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = toml::to_string(value).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        self.write(name, &text, true)
    }

    /// Writes the manifest last, listing every file in name order.
    pub fn finish(mut self, command: &str, seed: Option<u64>) -> Result<PathBuf, CliError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            files: std::mem::take(&mut self.files),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))? + "\n";
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text).map_err(CliError::io(&path))?;
        Ok(self.dir)
    }
}
