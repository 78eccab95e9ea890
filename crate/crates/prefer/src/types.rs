//! Domain types shared by every other module.
//!
//! All of these are immutable value objects once constructed and safe to
//! share across threads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The ordered set of class labels a task admits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::Contract(format!(
                "label space needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            for b in labels.iter().skip(i + 1) {
                if a.trim().eq_ignore_ascii_case(b.trim()) {
                    return Err(Error::Contract(format!("duplicate label `{a}`")));
                }
            }
        }
        Ok(Self { labels })
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Case-insensitive, trimmed lookup.
    pub fn find(&self, text: &str) -> Option<usize> {
        let needle = text.trim();
        self.labels
            .iter()
            .position(|l| l.trim().eq_ignore_ascii_case(needle))
    }
}

/// A single training or inference example. `gold` is absent at inference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub fields: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

/// A prediction for one example: the label index, or `None` on abstention
/// (unparseable model answer, scored as an error).
pub type Prediction = Option<usize>;

/// Training examples with a normalized weight distribution over them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDataset {
    pub examples: Vec<Example>,
    pub weights: Vec<f64>,
}

pub const WEIGHT_SUM_TOL: f64 = 1e-9;

impl WeightedDataset {
    /// Uniform initial weights 1/N.
    pub fn uniform(examples: Vec<Example>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Contract("dataset is empty".into()));
        }
        let n = examples.len();
        Ok(Self {
            examples,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn with_weights(examples: Vec<Example>, weights: Vec<f64>) -> Result<Self> {
        if examples.len() != weights.len() {
            return Err(Error::Contract(format!(
                "weights length {} != examples length {}",
                weights.len(),
                examples.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Contract("weights must be finite and non-negative".into()));
        }
        let mut ds = Self { examples, weights };
        ds.normalize()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Rescale weights to sum to 1. Idempotent.
    pub fn normalize(&mut self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::Contract(format!("weight sum {sum} is not positive")));
        }
        for w in &mut self.weights {
            *w /= sum;
        }
        Ok(())
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Gold label index per example; errors if any gold is absent or unknown.
    pub fn gold_indices(&self, labels: &LabelSpace) -> Result<Vec<usize>> {
        self.examples
            .iter()
            .map(|ex| {
                let gold = ex.gold.as_deref().ok_or_else(|| {
                    Error::Contract(format!("example `{}` has no gold label", ex.id))
                })?;
                labels.find(gold).ok_or_else(|| {
                    Error::Contract(format!(
                        "example `{}` gold label `{gold}` is not in the label space",
                        ex.id
                    ))
                })
            })
            .collect()
    }
}

/// A demonstration for in-context learning: field values plus the gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub fields: BTreeMap<String, String>,
    pub label: String,
}

/// One weak learner's instruction text plus the fixed scaffolding around it.
/// Only `instruction` varies across boosting iterations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: String,
    pub instruction: String,
    pub output_format: String,
    #[serde(default)]
    pub demonstrations: Vec<Demonstration>,
    pub iteration: u32,
}

impl Prompt {
    /// The refined prompt for the next iteration: new instruction, same
    /// scaffolding.
    pub fn refined(&self, instruction: String) -> Prompt {
        let iteration = self.iteration + 1;
        Prompt {
            id: format!("p{iteration}"),
            instruction,
            output_format: self.output_format.clone(),
            demonstrations: self.demonstrations.clone(),
            iteration,
        }
    }
}

/// Reasons the model gave for a prompt's failures in one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub reasons: Vec<String>,
    pub source_prompt_id: String,
    pub iteration: u32,
}

/// A prompt bound to its ensemble weight, training error, and the
/// reflections that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLearner {
    pub prompt: Prompt,
    pub lambda: f64,
    pub train_error: f64,
    #[serde(default)]
    pub reflections: Vec<Reflection>,
}

/// The trained ensemble: ordered weak learners plus the label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub learners: Vec<WeakLearner>,
    pub label_space: LabelSpace,
    pub seed: u64,
    pub config_digest: String,
}

/// Forward (S+) and optional backward (S-) per-label confidence scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVector {
    pub forward: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backward: Option<Vec<f64>>,
}

impl ConfidenceVector {
    pub fn forward_only(forward: Vec<f64>) -> Self {
        Self {
            forward,
            backward: None,
        }
    }
}
