//! Metrics, the k-shot sampling protocol, and the ablation grid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::boosting::{
    train, BoostConfig, IterationRecord, PredictionStrategy, RefineStrategy,
};
use crate::error::{Error, Result};
use crate::inference::{ensemble_predict, DecisionMode};
use crate::provider::Provider;
use crate::templates::TemplateSet;
use crate::types::{Ensemble, Example, LabelSpace, Prediction, Prompt, WeightedDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    /// F1 of one designated positive class.
    BinaryPositive { positive: usize },
    /// Unweighted mean of per-class F1 over all K classes.
    Macro,
}

fn per_class_f1(predictions: &[Prediction], golds: &[usize], class: usize) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (pred, gold) in predictions.iter().zip(golds) {
        let predicted = *pred == Some(class);
        let actual = *gold == class;
        match (predicted, actual) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn f1_score(
    predictions: &[Prediction],
    golds: &[usize],
    k: usize,
    averaging: Averaging,
) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != golds.len() {
        return Err(Error::Contract(format!(
            "f1_score needs aligned non-empty inputs, got {} predictions and {} golds",
            predictions.len(),
            golds.len()
        )));
    }
    match averaging {
        Averaging::BinaryPositive { positive } => {
            if positive >= k {
                return Err(Error::Contract(format!(
                    "positive class index {positive} out of range for K={k}"
                )));
            }
            Ok(per_class_f1(predictions, golds, positive))
        }
        Averaging::Macro => {
            let sum: f64 = (0..k).map(|c| per_class_f1(predictions, golds, c)).sum();
            Ok(sum / k as f64)
        }
    }
}

pub fn accuracy(predictions: &[Prediction], golds: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != golds.len() {
        return Err(Error::Contract("accuracy needs aligned non-empty inputs".into()));
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| **p == Some(**g))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Default k for the few-shot protocol.
pub const DEFAULT_K: usize = 50;

/// Uniform sample of k examples without replacement, deterministic under
/// the seed, uniform initial weights 1/k.
pub fn kshot_sample(examples: &[Example], k: usize, seed: u64) -> Result<WeightedDataset> {
    if k < 1 || k > examples.len() {
        return Err(Error::Contract(format!(
            "k = {k} out of range for dataset of {} examples",
            examples.len()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..examples.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(k);
    let sampled = indices.into_iter().map(|i| examples[i].clone()).collect();
    WeightedDataset::uniform(sampled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum AblationMode {
    Full,
    NoFeedback,
    NoBagging,
    Voting,
}

impl AblationMode {
    /// The component substitution for this mode; all weight math is shared.
    pub fn strategies(self, tau: f64, voting_n: usize) -> (PredictionStrategy, RefineStrategy) {
        match self {
            AblationMode::Full => (PredictionStrategy::Bilateral { tau }, RefineStrategy::Feedback),
            AblationMode::NoFeedback => (
                PredictionStrategy::Bilateral { tau },
                RefineStrategy::SynonymRewrite,
            ),
            AblationMode::NoBagging => (PredictionStrategy::SingleSolve, RefineStrategy::Feedback),
            AblationMode::Voting => (
                PredictionStrategy::Voting { n: voting_n },
                RefineStrategy::Feedback,
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub mode: AblationMode,
    pub records: Vec<IterationRecord>,
    pub f1: f64,
    pub calls_total: u64,
    pub learners: usize,
}

/// Train under the given ablation mode, then score the resulting ensemble
/// on the evaluation examples. The provider counter is reset first so
/// `calls_total` covers exactly this run.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    mode: AblationMode,
    seed_prompt: Prompt,
    train_examples: Vec<Example>,
    eval_examples: &[Example],
    ts: &TemplateSet,
    labels: &LabelSpace,
    provider: &dyn Provider,
    config: &BoostConfig,
    voting_n: usize,
    tau: f64,
) -> Result<AblationReport> {
    let (prediction, refine) = mode.strategies(tau, voting_n);
    let config = BoostConfig {
        prediction,
        refine,
        ..config.clone()
    };
    provider.reset_count();
    let (ensemble, outcome) = train(
        seed_prompt,
        train_examples,
        ts,
        labels,
        provider,
        &config,
        "ablation",
        None,
    )?;
    let f1 = score_ensemble(&ensemble, eval_examples, ts, provider, tau)?;
    Ok(AblationReport {
        mode,
        records: outcome.records,
        f1,
        calls_total: provider.call_count(),
        learners: ensemble.learners.len(),
    })
}

/// F1 of an ensemble over labeled examples: positive-class F1 for binary
/// tasks (positive = first label), macro-F1 otherwise.
pub fn score_ensemble(
    ensemble: &Ensemble,
    examples: &[Example],
    ts: &TemplateSet,
    provider: &dyn Provider,
    tau: f64,
) -> Result<f64> {
    let labels = &ensemble.label_space;
    let mut predictions = Vec::with_capacity(examples.len());
    let mut golds = Vec::with_capacity(examples.len());
    for ex in examples {
        let gold = ex
            .gold
            .as_deref()
            .and_then(|g| labels.find(g))
            .ok_or_else(|| Error::Contract(format!("example `{}` lacks a usable gold label", ex.id)))?;
        golds.push(gold);
        let p = ensemble_predict(ensemble, ex, ts, provider, DecisionMode::WeightedVote, tau)?;
        predictions.push(p.label.as_deref().and_then(|l| labels.find(l)));
    }
    let averaging = if labels.k() == 2 {
        Averaging::BinaryPositive { positive: 0 }
    } else {
        Averaging::Macro
    };
    f1_score(&predictions, &golds, labels.k(), averaging)
}
