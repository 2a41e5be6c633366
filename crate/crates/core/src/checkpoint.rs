//! Periodic weight checkpoints: a flat little-endian `f64` file plus a JSON
//! manifest carrying the round, architecture and content hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{RoundObserver, RoundReport};
use crate::error::{Error, Result};
use crate::model::{Architecture, ParameterVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub round: usize,
    pub arch: Architecture,
    pub num_params: usize,
    /// File name of the weights, relative to the manifest.
    pub weights: String,
    pub sha256: String,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `weights` for `round` into `dir`. Returns `(weights_path, manifest_path)`.
pub fn save(dir: &Path, round: usize, weights: &ParameterVector) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = format!("checkpoint_r{round:05}");
    let bin_name = format!("{stem}.bin");
    let bytes: Vec<u8> = weights.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let bin_path = dir.join(&bin_name);
    fs::write(&bin_path, &bytes).map_err(|e| Error::io(&bin_path, e))?;
    let manifest = CheckpointManifest {
        round,
        arch: weights.arch(),
        num_params: weights.len(),
        weights: bin_name,
        sha256: digest(&bytes),
    };
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&json_path, e))?;
    Ok((bin_path, json_path))
}

/// Load a checkpoint from its manifest, verifying length and hash.
pub fn load(manifest_path: &Path) -> Result<(usize, ParameterVector)> {
    let raw = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&raw)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let bin_path = dir.join(&manifest.weights);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let file = bin_path.display().to_string();
    if bytes.len() != manifest.num_params * 8 {
        return Err(Error::Format {
            file,
            offset: bytes.len(),
            reason: format!("expected {} bytes", manifest.num_params * 8),
        });
    }
    if digest(&bytes) != manifest.sha256 {
        return Err(Error::Format {
            file,
            offset: 0,
            reason: "checksum mismatch".into(),
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((manifest.round, ParameterVector::from_values(manifest.arch, values)?))
}

/// Saves every `every`-th round (and nothing else).
pub struct Checkpointer {
    dir: PathBuf,
    every: usize,
    written: Vec<PathBuf>,
}

impl Checkpointer {
    pub fn new(dir: impl Into<PathBuf>, every: usize) -> Result<Self> {
        if every == 0 {
            return Err(Error::config("checkpoint_every", "must be >= 1"));
        }
        Ok(Checkpointer {
            dir: dir.into(),
            every,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

impl RoundObserver for Checkpointer {
    fn on_round(&mut self, report: &RoundReport, weights: &ParameterVector) -> Result<()> {
        if report.round.is_multiple_of(self.every) {
            let (bin, json) = save(&self.dir, report.round, weights)?;
            self.written.push(bin);
            self.written.push(json);
        }
        Ok(())
    }
}
