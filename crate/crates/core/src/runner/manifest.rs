//! Run manifests: config echo, emitted files with content hashes, warnings,
//! metrics and invariant checks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
    InvariantViolation,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub timestamp: String,
    pub config: ExperimentConfig,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<FileRecord>,
    pub warnings: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub labels: BTreeMap<String, String>,
    pub checks: Vec<InvariantCheck>,
    #[serde(skip)]
    out_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(config: ExperimentConfig, out_dir: &Path) -> Self {
        RunManifest {
            software: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            config,
            status: RunStatus::Ok,
            failed_stage: None,
            error: None,
            files: Vec::new(),
            warnings: Vec::new(),
            metrics: BTreeMap::new(),
            labels: BTreeMap::new(),
            checks: Vec::new(),
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Write `bytes` to `name` inside the output directory and record its hash.
    pub fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.out_dir.join(name), bytes)?;
        self.files.push(FileRecord {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn label(&mut self, name: &str, value: impl Into<String>) {
        self.labels.insert(name.to_string(), value.into());
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        if !self.warnings.contains(&m) {
            self.warnings.push(m);
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(InvariantCheck {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
        if !passed && self.status == RunStatus::Ok {
            self.status = RunStatus::InvariantViolation;
        }
    }

    pub fn fail(&mut self, stage: &str, error: &str) {
        self.status = RunStatus::Failed;
        self.failed_stage = Some(stage.to_string());
        self.error = Some(error.to_string());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Write the manifest itself; it is not listed among `files`.
    pub fn write(&self) -> Result<PathBuf> {
        let path = self.out_dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_json())?;
        Ok(path)
    }
}
