use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Output directory, created on first write. Every file is written to a
/// hidden temp file and renamed into place.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn new(root: PathBuf) -> OutputDir {
        OutputDir { root, files: Vec::new() }
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let io = |e: std::io::Error, what: &str| CliError::Io(format!("{what} {}: {e}", self.root.join(name).display()));
        fs::create_dir_all(&self.root).map_err(|e| io(e, "create"))?;
        let tmp = self.root.join(format!(".{name}.tmp"));
        let mut f = fs::File::create(&tmp).map_err(|e| io(e, "create"))?;
        f.write_all(contents).map_err(|e| io(e, "write"))?;
        f.sync_all().map_err(|e| io(e, "sync"))?;
        fs::rename(&tmp, self.root.join(name)).map_err(|e| io(e, "rename"))?;
        if !self.files.iter().any(|n| n == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_str(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        self.write(name, contents.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("serialize {name}: {e}")))?;
        text.push('\n');
        self.write_str(name, &text)
    }
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub experiment: &'a str,
    /// SHA-256 of the normalized config (parsed, defaults filled in).
    pub config_sha256: String,
    pub versions: Versions,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
pub struct Versions {
    pub mckeanflow: &'static str,
    pub mckeanflow_core: &'static str,
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    let text = serde_json::to_string(config).unwrap_or_default();
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn versions() -> Versions {
    Versions { mckeanflow: env!("CARGO_PKG_VERSION"), mckeanflow_core: mckeanflow_core::VERSION }
}
