//! Run manifest: configuration snapshot, completed steps, iteration history
//! and a SHA-256 digest of every emitted file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Phase, PipelineError};
use crate::validation::NextStep;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: Phase,
    /// Iteration number for preprocess, cluster and validate.
    pub iteration: Option<usize>,
    pub infos: usize,
    pub warnings: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub samples: usize,
    pub hyperparameters: String,
    /// Cluster count per engine.
    pub clusters: BTreeMap<String, usize>,
    /// mpi of ClusWiSARD against each validation engine.
    pub mpi: BTreeMap<String, f64>,
    pub gating_mpi: f64,
    pub best_match: f64,
    pub selected: usize,
    pub path: NextStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub steps: Vec<StepRecord>,
    pub iterations: Vec<IterationRecord>,
    /// Last path chosen by the iteration loop.
    pub outcome: Option<NextStep>,
    /// The loop reached a terminal path within `max_iterations`.
    pub converged: bool,
    /// Path relative to the run directory -> lowercase hex SHA-256.
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            config,
            steps: Vec::new(),
            iterations: Vec::new(),
            outcome: None,
            converged: false,
            files: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(run_dir: &Path) -> Result<Option<Self>, PipelineError> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub checked: usize,
    pub mismatched: Vec<String>,
    pub missing: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatched.is_empty() && self.missing.is_empty()
    }
}

/// Recompute every digest listed in the manifest under `run_dir`.
pub fn verify_manifest(run_dir: &Path) -> Result<VerifyReport, PipelineError> {
    let manifest = RunManifest::load(run_dir)?.ok_or_else(|| {
        PipelineError::Data(format!("no {MANIFEST_FILE} in {}", run_dir.display()))
    })?;
    let mut report = VerifyReport::default();
    for (rel, digest) in &manifest.files {
        let path = run_dir.join(rel);
        match std::fs::read(&path) {
            Ok(bytes) => {
                report.checked += 1;
                if &sha256_hex(&bytes) != digest {
                    report.mismatched.push(rel.clone());
                }
            }
            Err(_) => report.missing.push(rel.clone()),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
