//! Run configuration: defaults, flat key-value config files, and the
//! task/seed-prompt file.
//!
//! Precedence: CLI flag > config file > built-in default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_K;
use crate::types::{Demonstration, LabelSpace, Prompt};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub k: usize,
    pub iters: usize,
    pub tau: f64,
    pub m: usize,
    pub num_feedbacks: usize,
    pub seed: u64,
    pub voting_n: usize,
    pub max_concurrency: usize,
    pub model: String,
    pub base_url: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            iters: 5,
            tau: 1.0,
            m: 4,
            num_feedbacks: 2,
            seed: 0,
            voting_n: 3,
            max_concurrency: 4,
            model: "gpt-4o-mini".into(),
            base_url: "https://api.openai.com/v1".into(),
        }
    }
}

impl RunConfig {
    /// Digest over the result-affecting fields only; operational knobs
    /// (concurrency, backend identity) do not forbid a resume.
    pub fn digest(&self) -> Result<String> {
        crate::persistence::digest(&json!({
            "k": self.k,
            "iters": self.iters,
            "tau": self.tau,
            "m": self.m,
            "num_feedbacks": self.num_feedbacks,
            "seed": self.seed,
            "voting_n": self.voting_n,
        }))
    }

    /// Apply values from a flat `key = value` config file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        for (key, value) in parse_flat_file(path)? {
            let parse_err =
                |what: &str| Error::Config(format!("config key `{key}`: bad {what} `{value}`"));
            match key.as_str() {
                "k" => self.k = value.parse().map_err(|_| parse_err("integer"))?,
                "iters" => self.iters = value.parse().map_err(|_| parse_err("integer"))?,
                "tau" => self.tau = value.parse().map_err(|_| parse_err("number"))?,
                "m" => self.m = value.parse().map_err(|_| parse_err("integer"))?,
                "num_feedbacks" => {
                    self.num_feedbacks = value.parse().map_err(|_| parse_err("integer"))?
                }
                "seed" => self.seed = value.parse().map_err(|_| parse_err("integer"))?,
                "voting_n" => self.voting_n = value.parse().map_err(|_| parse_err("integer"))?,
                "max_concurrency" => {
                    self.max_concurrency = value.parse().map_err(|_| parse_err("integer"))?
                }
                "model" => self.model = value,
                "base_url" => self.base_url = value,
                other => {
                    return Err(Error::Config(format!("unknown config key `{other}`")));
                }
            }
        }
        Ok(())
    }
}

fn parse_flat_file(path: &Path) -> Result<Vec<(String, String)>> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{} line {}: expected `key = value`",
                path.display(),
                lineno + 1
            )));
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// The seed-prompt / task definition file (JSON): instruction, output
/// format, label set, prediction-section layout, optional demonstrations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub instruction: String,
    pub output_format: String,
    pub labels: Vec<String>,
    pub prediction: String,
    #[serde(default)]
    pub demonstrations: Vec<Demonstration>,
}

impl TaskSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        serde_json::from_str(&content)
            .map_err(|e| Error::Config(format!("task file {}: {e}", path.display())))
    }

    pub fn label_space(&self) -> Result<LabelSpace> {
        LabelSpace::new(self.labels.clone())
    }

    pub fn seed_prompt(&self) -> Prompt {
        Prompt {
            id: "p0".into(),
            instruction: self.instruction.clone(),
            output_format: self.output_format.clone(),
            demonstrations: self.demonstrations.clone(),
            iteration: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_protocol() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.k, 50);
        assert_eq!(cfg.tau, 1.0);
        assert_eq!(cfg.m, 4);
        assert_eq!(cfg.num_feedbacks, 2);
    }

    #[test]
    fn file_overrides_and_digest_stability() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nk = 10\ntau = 0.8\nseed = 9\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.tau, 0.8);
        assert_eq!(cfg.seed, 9);

        let d1 = cfg.digest().unwrap();
        let d2 = cfg.digest().unwrap();
        assert_eq!(d1, d2);
        cfg.max_concurrency = 99;
        assert_eq!(cfg.digest().unwrap(), d1);
        cfg.seed = 10;
        assert_ne!(cfg.digest().unwrap(), d1);
    }

    #[test]
    fn bad_config_lines_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "nonsense line\n").unwrap();
        assert!(RunConfig::default().apply_file(&path).is_err());
        std::fs::write(&path, "mystery = 1\n").unwrap();
        assert!(RunConfig::default().apply_file(&path).is_err());
        std::fs::write(&path, "k = banana\n").unwrap();
        assert!(RunConfig::default().apply_file(&path).is_err());
    }
}
