//! The boosting training loop.
//!
//! Each step: predict over the weighted training set (bilateral bagging by
//! default), compute the weighted error and the learner weight
//! log((1-e)/e) + log(K-1), up-weight misclassified instances, then run the
//! feedback -> reflect -> refine chain to produce the next prompt.

use crate::bagging;
use crate::error::{Error, Result};
use crate::provider::{CompletionRequest, Provider, CREATIVE_TEMPERATURE, SOLVE_TEMPERATURE};
use crate::templates::{self, ErrorEntry, ErrorInfo, TemplateSet};
use crate::types::{
    Ensemble, Example, LabelSpace, Prediction, Prompt, Reflection, WeakLearner, WeightedDataset,
};

/// Clamp bound applied to the error before the learner-weight log ratio.
pub const ERROR_EPSILON: f64 = 1e-6;

/// How one prediction per training example is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictionStrategy {
    /// Forward confidence pass, backward pass when below tau (default).
    Bilateral { tau: f64 },
    /// One solving call plus label parsing (the -Bagging ablation).
    SingleSolve,
    /// n sampled solving calls, most frequent label (the Voting ablation).
    Voting { n: usize },
}

/// How the next iteration's prompt is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineStrategy {
    /// error_info feedback -> reflection -> refine (default).
    Feedback,
    /// Synonym rewrite of the current instruction, no error info
    /// (the -Feedback ablation).
    SynonymRewrite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    pub iters: usize,
    /// Misclassified examples included in error_info.
    pub m: usize,
    pub num_feedbacks: usize,
    pub seed: u64,
    pub prediction: PredictionStrategy,
    pub refine: RefineStrategy,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            iters: 5,
            m: 4,
            num_feedbacks: 2,
            seed: 0,
            prediction: PredictionStrategy::Bilateral { tau: 1.0 },
            refine: RefineStrategy::Feedback,
        }
    }
}

/// Weighted ensemble error: sum_i w_i * I(y_i != yhat_i) / sum_i w_i.
/// Abstentions count as errors.
pub fn weighted_error(
    predictions: &[Prediction],
    dataset: &WeightedDataset,
    labels: &LabelSpace,
) -> Result<f64> {
    if predictions.len() != dataset.len() {
        return Err(Error::Contract(format!(
            "predictions length {} != dataset length {}",
            predictions.len(),
            dataset.len()
        )));
    }
    let golds = dataset.gold_indices(labels)?;
    let mut num = 0.0;
    for ((pred, gold), w) in predictions.iter().zip(&golds).zip(&dataset.weights) {
        if *pred != Some(*gold) {
            num += w;
        }
    }
    Ok(num / dataset.weight_sum())
}

/// Learner weight: log((1-e)/e) + log(K-1), error clamped away from 0 and 1.
pub fn learner_weight(error: f64, k: usize) -> f64 {
    let e = error.clamp(ERROR_EPSILON, 1.0 - ERROR_EPSILON);
    ((1.0 - e) / e).ln() + ((k - 1) as f64).ln()
}

/// Instance reweighting: w_i *= exp(lambda * I(wrong)), then renormalize.
pub fn reweight_instances(
    dataset: &WeightedDataset,
    predictions: &[Prediction],
    labels: &LabelSpace,
    lambda: f64,
) -> Result<WeightedDataset> {
    if predictions.len() != dataset.len() {
        return Err(Error::Contract("predictions/dataset length mismatch".into()));
    }
    let golds = dataset.gold_indices(labels)?;
    let scale = lambda.exp();
    let mut out = dataset.clone();
    for ((w, pred), gold) in out.weights.iter_mut().zip(predictions).zip(&golds) {
        if *pred != Some(*gold) {
            *w *= scale;
        }
    }
    out.normalize()?;
    Ok(out)
}

/// The m misclassified examples with the highest current weight (ties to
/// the lowest index). `None` signals convergence: nothing was wrong.
pub fn select_error_examples(
    dataset: &WeightedDataset,
    predictions: &[Prediction],
    labels: &LabelSpace,
    m: usize,
) -> Result<Option<ErrorInfo>> {
    if m < 1 {
        return Err(Error::Contract("m must be >= 1".into()));
    }
    let golds = dataset.gold_indices(labels)?;
    let mut wrong: Vec<usize> = (0..dataset.len())
        .filter(|&i| predictions[i] != Some(golds[i]))
        .collect();
    if wrong.is_empty() {
        return Ok(None);
    }
    wrong.sort_by(|&a, &b| {
        dataset.weights[b]
            .partial_cmp(&dataset.weights[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    wrong.truncate(m);
    let entries = wrong
        .into_iter()
        .map(|i| ErrorEntry {
            fields: dataset.examples[i].fields.clone(),
            gold: dataset.examples[i].gold.clone().unwrap_or_default(),
            answered: predictions[i].map(|p| labels.label(p).to_string()),
        })
        .collect();
    Ok(Some(ErrorInfo { entries }))
}

fn predict_one(
    ts: &TemplateSet,
    prompt: &Prompt,
    example: &Example,
    labels: &LabelSpace,
    provider: &dyn Provider,
    strategy: PredictionStrategy,
) -> Result<Prediction> {
    match strategy {
        PredictionStrategy::Bilateral { tau } => {
            let p = bagging::bilateral_predict(ts, prompt, example, labels, provider, tau)?;
            Ok(Some(p.label_index))
        }
        PredictionStrategy::SingleSolve => {
            let user_text = templates::render_solving(ts, prompt, example)?;
            let completion =
                provider.complete(&CompletionRequest::new(user_text, SOLVE_TEMPERATURE))?;
            Ok(templates::parse_label(&completion.text, labels))
        }
        PredictionStrategy::Voting { n } => {
            bagging::majority_vote(ts, prompt, example, labels, provider, n)
        }
    }
}

/// Predictions for every example, in example order.
pub fn predict_all(
    ts: &TemplateSet,
    prompt: &Prompt,
    examples: &[Example],
    labels: &LabelSpace,
    provider: &dyn Provider,
    strategy: PredictionStrategy,
) -> Result<Vec<Prediction>> {
    examples
        .iter()
        .map(|ex| predict_one(ts, prompt, ex, labels, provider, strategy))
        .collect()
}

fn call_with_retry<F>(provider: &dyn Provider, request: &CompletionRequest, parse: F) -> Result<String>
where
    F: Fn(&str) -> Result<String>,
{
    let completion = provider.complete(request)?;
    match parse(&completion.text) {
        Ok(v) => Ok(v),
        Err(_) => {
            let completion = provider.complete(request)?;
            parse(&completion.text)
        }
    }
}

/// The feedback -> reflect half of the chain: one provider call (plus at
/// most one retry on unparseable output).
fn run_feedback(
    ts: &TemplateSet,
    prompt: &Prompt,
    errors: &ErrorInfo,
    num_feedbacks: usize,
    provider: &dyn Provider,
) -> Result<Reflection> {
    let user_text = templates::render_feedback(ts, prompt, errors, num_feedbacks)?;
    let request = CompletionRequest::new(user_text, CREATIVE_TEMPERATURE);
    let completion = provider.complete(&request)?;
    match templates::parse_reflections(&completion.text, &prompt.id, prompt.iteration) {
        Ok(r) => Ok(r),
        Err(_) => {
            let completion = provider.complete(&request)?;
            templates::parse_reflections(&completion.text, &prompt.id, prompt.iteration)
        }
    }
}

/// The refine half: one provider call yielding the next instruction.
fn run_refine(
    ts: &TemplateSet,
    prompt: &Prompt,
    reflection: &Reflection,
    provider: &dyn Provider,
) -> Result<String> {
    let user_text = templates::render_refine(ts, prompt, reflection)?;
    let request = CompletionRequest::new(user_text, CREATIVE_TEMPERATURE);
    call_with_retry(provider, &request, |text| templates::parse_new_instruction(text))
}

fn run_synonym_rewrite(
    ts: &TemplateSet,
    prompt: &Prompt,
    provider: &dyn Provider,
) -> Result<String> {
    let user_text = templates::render_synonym_rewrite(ts, prompt)?;
    let request = CompletionRequest::new(user_text, CREATIVE_TEMPERATURE);
    call_with_retry(provider, &request, |text| templates::parse_new_instruction(text))
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub learner: WeakLearner,
    /// Absent on convergence (no misclassified examples -> no feedback).
    pub next_prompt: Option<Prompt>,
    pub reweighted: WeightedDataset,
    pub predictions: Vec<Prediction>,
    pub converged: bool,
}

/// One boosting step: predict, weigh, reweight, feedback, refine.
pub fn boost_step(
    dataset: &WeightedDataset,
    prompt: &Prompt,
    ts: &TemplateSet,
    labels: &LabelSpace,
    provider: &dyn Provider,
    config: &BoostConfig,
) -> Result<StepOutcome> {
    let predictions = predict_all(ts, prompt, &dataset.examples, labels, provider, config.prediction)?;
    let error = weighted_error(&predictions, dataset, labels)?;
    let lambda = learner_weight(error, labels.k());
    let reweighted = reweight_instances(dataset, &predictions, labels, lambda)?;

    let (reflections, next_instruction) = match config.refine {
        RefineStrategy::Feedback => {
            match select_error_examples(&reweighted, &predictions, labels, config.m)? {
                None => {
                    // converged: no feedback possible
                    let learner = WeakLearner {
                        prompt: prompt.clone(),
                        lambda,
                        train_error: error,
                        reflections: vec![],
                    };
                    return Ok(StepOutcome {
                        learner,
                        next_prompt: None,
                        reweighted,
                        predictions,
                        converged: true,
                    });
                }
                Some(errors) => {
                    let reflection =
                        run_feedback(ts, prompt, &errors, config.num_feedbacks, provider)?;
                    let instruction = run_refine(ts, prompt, &reflection, provider)?;
                    (vec![reflection], instruction)
                }
            }
        }
        RefineStrategy::SynonymRewrite => {
            let golds = dataset.gold_indices(labels)?;
            let all_correct = predictions
                .iter()
                .zip(&golds)
                .all(|(p, g)| *p == Some(*g));
            if all_correct {
                let learner = WeakLearner {
                    prompt: prompt.clone(),
                    lambda,
                    train_error: error,
                    reflections: vec![],
                };
                return Ok(StepOutcome {
                    learner,
                    next_prompt: None,
                    reweighted,
                    predictions,
                    converged: true,
                });
            }
            let instruction = run_synonym_rewrite(ts, prompt, provider)?;
            (vec![], instruction)
        }
    };

    let learner = WeakLearner {
        prompt: prompt.clone(),
        lambda,
        train_error: error,
        reflections,
    };
    Ok(StepOutcome {
        learner,
        next_prompt: Some(prompt.refined(next_instruction)),
        reweighted,
        predictions,
        converged: false,
    })
}

/// Per-iteration progress record for the metrics stream.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub error: f64,
    pub lambda: f64,
    pub calls: u64,
    pub admitted: bool,
}

/// Loop state handed to the step hook after every iteration.
pub struct TrainState<'a> {
    pub completed_iterations: usize,
    pub dataset: &'a WeightedDataset,
    pub learners: &'a [WeakLearner],
    pub next_prompt: Option<&'a Prompt>,
    pub record: &'a IterationRecord,
    pub provider_calls: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookAction {
    Continue,
    Stop,
}

pub type StepHook<'a> = dyn FnMut(&TrainState) -> HookAction + 'a;

/// Where a run (or a resumed run) starts from.
#[derive(Debug, Clone)]
pub struct LoopStart {
    pub dataset: WeightedDataset,
    pub prompt: Prompt,
    pub learners: Vec<WeakLearner>,
    pub start_iteration: usize,
    pub prev_discarded: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub learners: Vec<WeakLearner>,
    pub records: Vec<IterationRecord>,
    pub final_weights: Vec<f64>,
    pub next_prompt: Option<Prompt>,
    pub completed_iterations: usize,
    pub stopped_by_hook: bool,
}

/// The iteration loop shared by fresh training and resume.
///
/// A learner with lambda <= 0 is discarded (its weight update is not
/// adopted); one extra refine call requests a fresh prompt for the next
/// iteration. A second consecutive discard ends training with the learners
/// collected so far. Discarded iterations count against the budget.
pub fn run_boosting(
    start: LoopStart,
    ts: &TemplateSet,
    labels: &LabelSpace,
    provider: &dyn Provider,
    config: &BoostConfig,
    hook: Option<&mut StepHook>,
) -> Result<TrainOutcome> {
    let mut dataset = start.dataset;
    dataset.normalize()?;
    let mut prompt = start.prompt;
    let mut learners = start.learners;
    let mut records = Vec::new();
    let mut prev_discarded = start.prev_discarded;
    let mut completed = start.start_iteration;
    let mut next_prompt: Option<Prompt> = None;
    let mut stopped_by_hook = false;
    let mut hook = hook;

    for iteration in start.start_iteration..config.iters {
        let calls_before = provider.call_count();
        let outcome = match boost_step(&dataset, &prompt, ts, labels, provider, config) {
            Ok(o) => o,
            // one whole-step retry, then give up
            Err(_) => boost_step(&dataset, &prompt, ts, labels, provider, config)?,
        };
        let admitted = outcome.learner.lambda > 0.0;
        let mut pending_next = outcome.next_prompt.clone();

        if admitted {
            dataset = outcome.reweighted;
            learners.push(outcome.learner.clone());
            prev_discarded = false;
        } else if prev_discarded {
            // second consecutive failure: end with what we have
            let record = IterationRecord {
                iteration,
                error: outcome.learner.train_error,
                lambda: outcome.learner.lambda,
                calls: provider.call_count() - calls_before,
                admitted: false,
            };
            records.push(record);
            completed = iteration + 1;
            next_prompt = None;
            break;
        } else {
            prev_discarded = true;
            // fresh prompt via one extra refine call
            let fresh = match (config.refine, outcome.learner.reflections.first()) {
                (RefineStrategy::Feedback, Some(reflection)) => {
                    run_refine(ts, &prompt, reflection, provider)
                }
                _ => run_synonym_rewrite(ts, &prompt, provider),
            };
            match fresh {
                Ok(instruction) => pending_next = Some(prompt.refined(instruction)),
                Err(_) => {
                    completed = iteration + 1;
                    next_prompt = None;
                    let record = IterationRecord {
                        iteration,
                        error: outcome.learner.train_error,
                        lambda: outcome.learner.lambda,
                        calls: provider.call_count() - calls_before,
                        admitted: false,
                    };
                    records.push(record);
                    break;
                }
            }
        }

        let record = IterationRecord {
            iteration,
            error: outcome.learner.train_error,
            lambda: outcome.learner.lambda,
            calls: provider.call_count() - calls_before,
            admitted,
        };
        completed = iteration + 1;
        next_prompt = pending_next.clone();

        if let Some(hook) = hook.as_deref_mut() {
            let state = TrainState {
                completed_iterations: completed,
                dataset: &dataset,
                learners: &learners,
                next_prompt: pending_next.as_ref(),
                record: &record,
                provider_calls: provider.call_count(),
            };
            if hook(&state) == HookAction::Stop {
                records.push(record);
                stopped_by_hook = true;
                break;
            }
        }
        records.push(record);

        match pending_next {
            Some(p) => prompt = p,
            None => break, // convergence
        }
    }

    Ok(TrainOutcome {
        learners,
        records,
        final_weights: dataset.weights,
        next_prompt,
        completed_iterations: completed,
        stopped_by_hook,
    })
}

/// Full training from a seed prompt: uniform initial weights, `iters`
/// boosting steps, ensemble of all admitted learners.
pub fn train(
    seed_prompt: Prompt,
    examples: Vec<Example>,
    ts: &TemplateSet,
    labels: &LabelSpace,
    provider: &dyn Provider,
    config: &BoostConfig,
    config_digest: &str,
    hook: Option<&mut StepHook>,
) -> Result<(Ensemble, TrainOutcome)> {
    if config.iters < 1 {
        return Err(Error::Contract("iters must be >= 1".into()));
    }
    let dataset = WeightedDataset::uniform(examples)?;
    let start = LoopStart {
        dataset,
        prompt: seed_prompt,
        learners: vec![],
        start_iteration: 0,
        prev_discarded: false,
    };
    let outcome = run_boosting(start, ts, labels, provider, config, hook)?;
    let ensemble = Ensemble {
        learners: outcome.learners.clone(),
        label_space: labels.clone(),
        seed: config.seed,
        config_digest: config_digest.to_string(),
    };
    Ok((ensemble, outcome))
}
