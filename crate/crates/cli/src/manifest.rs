//! Run manifests: the resolved configuration, per-realization seed
//! streams, leakage statistics, and digests of every data file written.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentKind};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageStats {
    pub realizations: u64,
    /// Realizations with at least one eigenvalue outside the almost-sure
    /// bands (excluded from edge tables, never silently included).
    pub excluded_realizations: u64,
    pub out_of_band_plus: u64,
    pub out_of_band_minus: u64,
    pub total_eigenvalues: u64,
}

impl LeakageStats {
    pub fn exclusion_fraction(&self) -> f64 {
        if self.realizations == 0 {
            0.0
        } else {
            self.excluded_realizations as f64 / self.realizations as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub kind: ExperimentKind,
    /// Fully resolved configuration; rerunning it reproduces every data
    /// file byte for byte.
    pub config: ExperimentConfig,
    /// Boundary condition of the box restriction, recorded explicitly.
    pub boundary: String,
    /// ChaCha stream id per realization: stream r for realization r.
    pub realization_streams: Vec<u64>,
    pub timing_ms: u128,
    pub leakage: LeakageStats,
    pub outputs: Vec<OutputDigest>,
    /// True when an inequality that was expected to hold did not.
    pub verification_failed: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

pub fn digest_file(path: &Path) -> std::io::Result<OutputDigest> {
    let bytes = std::fs::read(path)?;
    Ok(OutputDigest {
        path: path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        sha256: sha256_hex(&bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            sha256_hex(b"position,weight\n"),
            sha256_hex(b"position,weight\n")
        );
        assert_ne!(sha256_hex(b"a"), sha256_hex(b"b"));
    }
}
