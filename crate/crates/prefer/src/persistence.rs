//! Checkpointing: canonical serialization, atomic writes, directory
//! locking, and the versioned checkpoint schema.
//!
//! Canonical form is JSON with recursively sorted keys and shortest
//! round-trippable float text, so identical runs produce byte-identical
//! files.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{Ensemble, Prompt};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// Draws consumed so far (sampling happens only at setup).
    pub counter: u64,
}

/// Everything needed to resume the training loop without replaying calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub ensemble: Ensemble,
    pub dataset_weights: Vec<f64>,
    pub completed_iterations: usize,
    pub rng_state: RngState,
    pub provider_calls_total: u64,
    pub config_digest: String,
    /// The refined-but-not-yet-evaluated prompt for the next iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_prompt: Option<Prompt>,
    /// Prediction-section template, needed to re-render prompts at resume
    /// and inference time.
    pub prediction_template: String,
}

fn sort_value(value: serde_json::Value) -> serde_json::Value {
    match value {
        serde_json::Value::Object(map) => {
            let mut sorted = serde_json::Map::new();
            let mut entries: Vec<(String, serde_json::Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            for (k, v) in entries {
                sorted.insert(k, sort_value(v));
            }
            serde_json::Value::Object(sorted)
        }
        serde_json::Value::Array(items) => {
            serde_json::Value::Array(items.into_iter().map(sort_value).collect())
        }
        other => other,
    }
}

/// Serialize with recursively sorted object keys.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let value = sort_value(serde_json::to_value(value)?);
    let mut out = serde_json::to_string_pretty(&value)?;
    out.push('\n');
    Ok(out)
}

/// Hex SHA-256 of the canonical serialization.
pub fn digest<T: Serialize>(value: &T) -> Result<String> {
    let canonical = canonical_json(value)?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

/// Write-temp-then-rename so readers never see a partial file.
pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let content = canonical_json(checkpoint)?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let content = std::fs::read_to_string(path)?;
    let checkpoint: Checkpoint = serde_json::from_str(&content).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        let offset = content
            .lines()
            .take(line.saturating_sub(1))
            .map(|l| l.len() + 1)
            .sum::<usize>()
            + column.saturating_sub(1);
        Error::CheckpointCorrupt {
            offset,
            line,
            column,
            message: e.to_string(),
        }
    })?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: checkpoint.version,
            supported: CHECKPOINT_VERSION,
        });
    }
    Ok(checkpoint)
}

/// Exclusive ownership of a checkpoint directory via a lock file, released
/// on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match File::options().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(path.display().to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
