//! Output files stamped with the configuration hash, and the run manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// SHA-256 of the resolved configuration without the output directory.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut canonical = config.clone();
    canonical.output.dir = None;
    let json = serde_json::to_string(&canonical).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

pub struct OutputSet {
    dir: PathBuf,
    hash: String,
    files: Vec<OutputFile>,
}

impl OutputSet {
    pub fn create(dir: &Path, hash: String) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash,
            files: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    fn store(&mut self, name: &str, bytes: Vec<u8>) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes)?;
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(path)
    }

    /// CSV whose first line is `# config_hash=...`; `body` writes the header row and data.
    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> io::Result<PathBuf> {
        let mut bytes = Vec::new();
        writeln!(bytes, "# config_hash={}", self.hash)?;
        body(&mut bytes)?;
        self.store(name, bytes)
    }

    /// CSV built from serializable rows with the `csv` crate.
    pub fn csv_rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> io::Result<PathBuf> {
        self.csv(name, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for r in rows {
                w.serialize(r).map_err(io::Error::other)?;
            }
            w.flush()
        })
    }

    /// JSON object `{"config_hash": ..., "report": ...}`.
    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> io::Result<PathBuf> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            config_hash: &'a str,
            report: &'a T,
        }
        let mut bytes = serde_json::to_vec_pretty(&Stamped {
            config_hash: &self.hash,
            report,
        })
        .map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.store(name, bytes)
    }

    /// `manifest.json` echoing the resolved config and every output hash.
    pub fn finish<S: Serialize>(self, config: &ExperimentConfig, passed: bool, summary: &S) -> io::Result<PathBuf> {
        #[derive(Serialize)]
        struct Manifest<'a, S> {
            experiment: &'a str,
            config_hash: &'a str,
            config: &'a ExperimentConfig,
            passed: bool,
            summary: &'a S,
            outputs: &'a [OutputFile],
        }
        let manifest = Manifest {
            experiment: config.experiment.as_deref().unwrap_or(""),
            config_hash: &self.hash,
            config,
            passed,
            summary,
            outputs: &self.files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, bytes)?;
        Ok(path)
    }
}
