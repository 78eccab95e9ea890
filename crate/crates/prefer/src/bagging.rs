//! Bilateral forward/backward confidence bagging.
//!
//! One prompt's decision on one example is stabilized by eliciting per-label
//! correctness confidence (S+) and, when the forward pass is not confident
//! enough, per-label exclusion confidence (S-), combined subtractively via
//! softmax over S+ - S-.

use crate::error::Result;
use crate::provider::{CompletionRequest, Provider, SOLVE_TEMPERATURE, CREATIVE_TEMPERATURE};
use crate::templates::{self, TemplateSet};
use crate::types::{ConfidenceVector, Example, LabelSpace, Prediction, Prompt};

pub const PROB_SUM_TOL: f64 = 1e-9;

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Argmax with ties broken by lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombineResult {
    pub probs: Vec<f64>,
    pub label_index: usize,
}

/// Subtractive-softmax combination: probs[j] = exp(S+_j - S-_j) / sum.
/// Absent backward scores are treated as all-zeros.
pub fn combine(conf: &ConfidenceVector) -> CombineResult {
    let diffs: Vec<f64> = match &conf.backward {
        Some(backward) => conf
            .forward
            .iter()
            .zip(backward)
            .map(|(f, b)| f - b)
            .collect(),
        None => conf.forward.clone(),
    };
    let probs = softmax(&diffs);
    let label_index = argmax(&probs);
    CombineResult { probs, label_index }
}

fn evaluate_confidence(
    ts: &TemplateSet,
    prompt: &Prompt,
    example: &Example,
    labels: &LabelSpace,
    provider: &dyn Provider,
    backward: bool,
) -> Result<Vec<f64>> {
    let user_text = templates::render_confidence(ts, prompt, example, labels, backward)?;
    let request = CompletionRequest::new(user_text, SOLVE_TEMPERATURE);
    let completion = provider.complete(&request)?;
    match templates::parse_confidences(&completion.text, labels) {
        Ok(scores) => Ok(scores),
        // one retry on parse failure, then propagate
        Err(_) => {
            let completion = provider.complete(&request)?;
            templates::parse_confidences(&completion.text, labels)
        }
    }
}

/// Forward confidence pass: one provider call (plus at most one retry).
pub fn evaluate_forward(
    ts: &TemplateSet,
    prompt: &Prompt,
    example: &Example,
    labels: &LabelSpace,
    provider: &dyn Provider,
) -> Result<ConfidenceVector> {
    let forward = evaluate_confidence(ts, prompt, example, labels, provider, false)?;
    Ok(ConfidenceVector::forward_only(forward))
}

/// Backward (exclusion) confidence pass.
pub fn evaluate_backward(
    ts: &TemplateSet,
    prompt: &Prompt,
    example: &Example,
    labels: &LabelSpace,
    provider: &dyn Provider,
) -> Result<Vec<f64>> {
    evaluate_confidence(ts, prompt, example, labels, provider, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilateralPrediction {
    pub label_index: usize,
    pub probs: Vec<f64>,
    pub calls_used: u32,
}

/// Forward pass first; when the forward-only softmax peak is below `tau`
/// the backward pass is triggered and both sides are combined.
pub fn bilateral_predict(
    ts: &TemplateSet,
    prompt: &Prompt,
    example: &Example,
    labels: &LabelSpace,
    provider: &dyn Provider,
    tau: f64,
) -> Result<BilateralPrediction> {
    let mut conf = evaluate_forward(ts, prompt, example, labels, provider)?;
    let forward_only = combine(&conf);
    if forward_only.probs[forward_only.label_index] >= tau {
        return Ok(BilateralPrediction {
            label_index: forward_only.label_index,
            probs: forward_only.probs,
            calls_used: 1,
        });
    }
    conf.backward = Some(evaluate_backward(ts, prompt, example, labels, provider)?);
    let combined = combine(&conf);
    Ok(BilateralPrediction {
        label_index: combined.label_index,
        probs: combined.probs,
        calls_used: 2,
    })
}

/// Majority-voting fallback: n independent solving calls at sampling
/// temperature; most frequent parsed label, ties to the lowest label index.
/// All-abstain yields `None`.
pub fn majority_vote(
    ts: &TemplateSet,
    prompt: &Prompt,
    example: &Example,
    labels: &LabelSpace,
    provider: &dyn Provider,
    n: usize,
) -> Result<Prediction> {
    if n < 1 {
        return Err(crate::error::Error::Contract("majority vote needs n >= 1".into()));
    }
    let user_text = templates::render_solving(ts, prompt, example)?;
    let mut counts = vec![0usize; labels.k()];
    let mut any = false;
    for _ in 0..n {
        let request = CompletionRequest::new(user_text.clone(), CREATIVE_TEMPERATURE);
        let completion = provider.complete(&request)?;
        if let Some(idx) = templates::parse_label(&completion.text, labels) {
            counts[idx] += 1;
            any = true;
        }
    }
    if !any {
        return Ok(None);
    }
    let mut best = 0;
    for (i, c) in counts.iter().enumerate().skip(1) {
        if *c > counts[best] {
            best = i;
        }
    }
    Ok(Some(best))
}
