//! Atomic output files, the run manifest and the run record.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use homlinf::pde::SolveLog;
use homlinf::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn json_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(json_err)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// An output directory; every file lands via a temporary file and a rename.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(name)).map_err(|e| Error::Io(e.error))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, &to_json(value)?)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LabeledSolve {
    pub label: String,
    #[serde(flatten)]
    pub log: SolveLog,
}

impl LabeledSolve {
    pub fn new(label: impl Into<String>, log: SolveLog) -> Self {
        LabeledSolve { label: label.into(), log }
    }
}

/// Solver activity of one run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunRecord {
    pub solves: Vec<LabeledSolve>,
}

impl RunRecord {
    pub fn push(&mut self, label: impl Into<String>, log: SolveLog) {
        self.solves.push(LabeledSolve::new(label, log));
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    /// SHA-256 of the config text as read (the printed defaults when no file is given).
    pub config_sha256: String,
    pub threads: usize,
    pub deterministic: bool,
    /// Seconds; omitted from deterministic runs so their outputs are reproducible.
    pub wall_time_s: Option<f64>,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
