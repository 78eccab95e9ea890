//! Command-line surface: train, predict, eval, ablate, resume.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail};
use clap::{Args, Parser, Subcommand};

use prefer::boosting::{
    run_boosting, BoostConfig, HookAction, LoopStart, PredictionStrategy, RefineStrategy,
    TrainState,
};
use prefer::config::{RunConfig, TaskSpec};
use prefer::dataset;
use prefer::evaluation::{self, AblationMode};
use prefer::inference::{ensemble_predict, DecisionMode};
use prefer::persistence::{
    load_checkpoint, save_checkpoint, Checkpoint, DirLock, RngState, CHECKPOINT_VERSION,
};
use prefer::provider::{LiveProvider, Provider, ScriptedProvider};
use prefer::templates::TemplateSet;
use prefer::types::{Ensemble, WeightedDataset};

#[derive(Parser)]
#[command(name = "prefer", about = "Prompt ensemble learning engine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Provider: `scripted:<transcript>` or `live`.
    #[arg(long, default_value = "live")]
    provider: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    num_feedbacks: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    voting_n: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.iters {
            cfg.iters = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.num_feedbacks {
            cfg.num_feedbacks = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.voting_n {
            cfg.voting_n = v;
        }
        Ok(cfg)
    }

    fn provider(&self, cfg: &RunConfig) -> anyhow::Result<Arc<dyn Provider>> {
        if let Some(path) = self.provider.strip_prefix("scripted:") {
            Ok(Arc::new(ScriptedProvider::from_path(Path::new(path))?))
        } else if self.provider == "live" {
            Ok(Arc::new(LiveProvider::from_env(
                &cfg.base_url,
                &cfg.model,
                cfg.max_concurrency,
            )?))
        } else {
            bail!("unknown provider `{}` (use `scripted:<transcript>` or `live`)", self.provider)
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train an ensemble from a seed prompt over a k-shot sample.
    Train {
        /// Task definition file (instruction, output format, labels, prediction layout).
        #[arg(long)]
        seed_prompt: PathBuf,
        /// Line-delimited labeled dataset.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint_dir: PathBuf,
        /// Stop after this many completed iterations (checkpoint stays resumable).
        #[arg(long)]
        stop_after: Option<usize>,
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Continue an interrupted run from its checkpoint directory.
    Resume {
        #[arg(long)]
        checkpoint_dir: PathBuf,
        #[arg(long)]
        seed_prompt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Batch prediction over an input file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Score a labeled file with the trained ensemble.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Metrics output file (line-delimited records); stdout if omitted.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        /// Positive label for binary F1; first label when omitted.
        #[arg(long)]
        positive_label: Option<String>,
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Run one ablation mode end to end and report F1 and call counts.
    Ablate {
        #[arg(long)]
        mode: AblationMode,
        #[arg(long)]
        seed_prompt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        common: ConfigArgs,
    },
}

fn boost_config(cfg: &RunConfig) -> BoostConfig {
    BoostConfig {
        iters: cfg.iters,
        m: cfg.m,
        num_feedbacks: cfg.num_feedbacks,
        seed: cfg.seed,
        prediction: PredictionStrategy::Bilateral { tau: cfg.tau },
        refine: RefineStrategy::Feedback,
    }
}

struct CheckpointWriter<'a> {
    dir: &'a Path,
    template: Checkpoint,
    base_calls: u64,
    stop_after: Option<usize>,
}

impl CheckpointWriter<'_> {
    fn write(&self, state: &TrainState, seed: u64, config_digest: &str) -> anyhow::Result<HookAction> {
        let ckpt = Checkpoint {
            ensemble: Ensemble {
                learners: state.learners.to_vec(),
                label_space: self.template.ensemble.label_space.clone(),
                seed,
                config_digest: config_digest.to_string(),
            },
            dataset_weights: state.dataset.weights.clone(),
            completed_iterations: state.completed_iterations,
            provider_calls_total: self.base_calls + state.provider_calls,
            next_prompt: state.next_prompt.cloned(),
            ..self.template.clone()
        };
        save_checkpoint(
            &self.dir.join(format!("checkpoint-{:04}.json", state.completed_iterations)),
            &ckpt,
        )?;
        save_checkpoint(&self.dir.join("checkpoint.json"), &ckpt)?;
        println!(
            "{}",
            serde_json::to_string(&serde_json::json!({
                "iteration": state.record.iteration,
                "error": state.record.error,
                "lambda": state.record.lambda,
                "calls": state.record.calls,
                "admitted": state.record.admitted,
            }))?
        );
        let stop = self
            .stop_after
            .is_some_and(|n| state.completed_iterations >= n);
        Ok(if stop { HookAction::Stop } else { HookAction::Continue })
    }
}

fn run_training(
    task: &TaskSpec,
    start: LoopStart,
    checkpoint_dir: &Path,
    cfg: &RunConfig,
    provider: &dyn Provider,
    base_calls: u64,
    stop_after: Option<usize>,
) -> anyhow::Result<()> {
    let labels = task.label_space()?;
    let ts = TemplateSet::with_prediction(&task.prediction);
    let digest = cfg.digest()?;
    let writer = CheckpointWriter {
        dir: checkpoint_dir,
        template: Checkpoint {
            version: CHECKPOINT_VERSION,
            ensemble: Ensemble {
                learners: vec![],
                label_space: labels.clone(),
                seed: cfg.seed,
                config_digest: digest.clone(),
            },
            dataset_weights: vec![],
            completed_iterations: 0,
            rng_state: RngState {
                seed: cfg.seed,
                counter: 1,
            },
            provider_calls_total: 0,
            config_digest: digest.clone(),
            next_prompt: None,
            prediction_template: task.prediction.clone(),
        },
        base_calls,
        stop_after,
    };

    let mut hook_err: Option<anyhow::Error> = None;
    let seed = cfg.seed;
    let mut hook = |state: &TrainState| match writer.write(state, seed, &digest) {
        Ok(action) => action,
        Err(e) => {
            hook_err = Some(e);
            HookAction::Stop
        }
    };
    let outcome = run_boosting(
        start,
        &ts,
        &labels,
        provider,
        &boost_config(cfg),
        Some(&mut hook),
    )?;
    if let Some(e) = hook_err {
        return Err(e);
    }
    eprintln!(
        "trained {} learner(s) over {} iteration(s); {} provider call(s); checkpoint in {}",
        outcome.learners.len(),
        outcome.completed_iterations,
        base_calls + provider.call_count(),
        checkpoint_dir.display()
    );
    Ok(())
}

fn cmd_train(
    seed_prompt: &Path,
    dataset_path: &Path,
    checkpoint_dir: &Path,
    stop_after: Option<usize>,
    common: &ConfigArgs,
) -> anyhow::Result<()> {
    let cfg = common.resolve()?;
    let provider = common.provider(&cfg)?;
    let task = TaskSpec::load(seed_prompt)?;
    let pool = dataset::read_examples(dataset_path)?;
    let sample = evaluation::kshot_sample(&pool, cfg.k, cfg.seed)?;
    let _lock = DirLock::acquire(checkpoint_dir)?;
    let start = LoopStart {
        dataset: sample,
        prompt: task.seed_prompt(),
        learners: vec![],
        start_iteration: 0,
        prev_discarded: false,
    };
    run_training(&task, start, checkpoint_dir, &cfg, provider.as_ref(), 0, stop_after)
}

fn cmd_resume(
    checkpoint_dir: &Path,
    seed_prompt: &Path,
    dataset_path: &Path,
    common: &ConfigArgs,
) -> anyhow::Result<()> {
    let cfg = common.resolve()?;
    let provider = common.provider(&cfg)?;
    let task = TaskSpec::load(seed_prompt)?;
    let _lock = DirLock::acquire(checkpoint_dir)?;
    let ckpt = load_checkpoint(&checkpoint_dir.join("checkpoint.json"))?;
    let digest = cfg.digest()?;
    if ckpt.config_digest != digest {
        return Err(prefer::Error::DigestMismatch {
            checkpoint: ckpt.config_digest,
            current: digest,
        }
        .into());
    }
    let Some(next_prompt) = ckpt.next_prompt.clone() else {
        eprintln!(
            "checkpoint already complete after {} iteration(s); nothing to resume",
            ckpt.completed_iterations
        );
        return Ok(());
    };
    let pool = dataset::read_examples(dataset_path)?;
    let sample = evaluation::kshot_sample(&pool, ckpt.dataset_weights.len(), ckpt.rng_state.seed)?;
    let dataset = WeightedDataset::with_weights(sample.examples, ckpt.dataset_weights.clone())?;
    let start = LoopStart {
        dataset,
        prompt: next_prompt,
        learners: ckpt.ensemble.learners.clone(),
        start_iteration: ckpt.completed_iterations,
        prev_discarded: false,
    };
    run_training(
        &task,
        start,
        checkpoint_dir,
        &cfg,
        provider.as_ref(),
        ckpt.provider_calls_total,
        None,
    )
}

fn load_ensemble(path: &Path) -> anyhow::Result<(Checkpoint, TemplateSet)> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.ensemble.learners.is_empty() {
        return Err(prefer::Error::EnsembleEmpty.into());
    }
    let ts = TemplateSet::with_prediction(&ckpt.prediction_template);
    Ok((ckpt, ts))
}

fn cmd_predict(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    common: &ConfigArgs,
) -> anyhow::Result<()> {
    let cfg = common.resolve()?;
    let provider = common.provider(&cfg)?;
    let (ckpt, ts) = load_ensemble(checkpoint)?;
    let examples = dataset::read_examples(input)?;
    let mut out = String::new();
    for ex in &examples {
        let p = ensemble_predict(
            &ckpt.ensemble,
            ex,
            &ts,
            provider.as_ref(),
            DecisionMode::WeightedVote,
            cfg.tau,
        )?;
        out.push_str(&serde_json::to_string(&serde_json::json!({
            "id": ex.id,
            "label": p.label,
            "per_learner": p.per_learner,
        }))?);
        out.push('\n');
    }
    std::fs::write(output, out)?;
    eprintln!("wrote {} prediction(s) to {}", examples.len(), output.display());
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    dataset_path: &Path,
    metrics_out: Option<&Path>,
    positive_label: Option<&str>,
    common: &ConfigArgs,
) -> anyhow::Result<()> {
    let cfg = common.resolve()?;
    let provider = common.provider(&cfg)?;
    let (ckpt, ts) = load_ensemble(checkpoint)?;
    let labels = &ckpt.ensemble.label_space;
    let examples = dataset::read_examples(dataset_path)?;

    let mut predictions = Vec::new();
    let mut golds = Vec::new();
    for ex in &examples {
        let gold = ex
            .gold
            .as_deref()
            .and_then(|g| labels.find(g))
            .ok_or_else(|| anyhow!("example `{}` lacks a usable gold label", ex.id))?;
        golds.push(gold);
        let p = ensemble_predict(
            &ckpt.ensemble,
            ex,
            &ts,
            provider.as_ref(),
            DecisionMode::WeightedVote,
            cfg.tau,
        )?;
        predictions.push(p.label.as_deref().and_then(|l| labels.find(l)));
    }

    let averaging = if labels.k() == 2 {
        let positive = match positive_label {
            Some(l) => labels
                .find(l)
                .ok_or_else(|| anyhow!("positive label `{l}` not in label space"))?,
            None => 0,
        };
        evaluation::Averaging::BinaryPositive { positive }
    } else {
        evaluation::Averaging::Macro
    };
    let f1 = evaluation::f1_score(&predictions, &golds, labels.k(), averaging)?;
    let acc = evaluation::accuracy(&predictions, &golds)?;
    let record = serde_json::to_string(&serde_json::json!({
        "mode": "eval",
        "f1": f1,
        "accuracy": acc,
        "examples": examples.len(),
        "calls": provider.call_count(),
    }))?;
    match metrics_out {
        Some(path) => std::fs::write(path, format!("{record}\n"))?,
        None => println!("{record}"),
    }
    eprintln!("F1 = {f1:.4}, accuracy = {acc:.4} over {} example(s)", examples.len());
    Ok(())
}

fn cmd_ablate(
    mode: AblationMode,
    seed_prompt: &Path,
    dataset_path: &Path,
    common: &ConfigArgs,
) -> anyhow::Result<()> {
    let cfg = common.resolve()?;
    let provider = common.provider(&cfg)?;
    let task = TaskSpec::load(seed_prompt)?;
    let labels = task.label_space()?;
    let ts = TemplateSet::with_prediction(&task.prediction);
    let pool = dataset::read_examples(dataset_path)?;
    let sample = evaluation::kshot_sample(&pool, cfg.k, cfg.seed)?;
    let eval_examples = sample.examples.clone();
    let report = evaluation::run_ablation(
        mode,
        task.seed_prompt(),
        sample.examples,
        &eval_examples,
        &ts,
        &labels,
        provider.as_ref(),
        &boost_config(&cfg),
        cfg.voting_n,
        cfg.tau,
    )?;
    for record in &report.records {
        println!(
            "{}",
            serde_json::to_string(&serde_json::json!({
                "mode": report.mode,
                "iteration": record.iteration,
                "error": record.error,
                "lambda": record.lambda,
                "f1": serde_json::Value::Null,
                "calls": record.calls,
            }))?
        );
    }
    println!(
        "{}",
        serde_json::to_string(&serde_json::json!({
            "mode": report.mode,
            "summary": true,
            "f1": report.f1,
            "learners": report.learners,
            "calls": report.calls_total,
        }))?
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train {
            seed_prompt,
            dataset,
            checkpoint_dir,
            stop_after,
            common,
        } => cmd_train(seed_prompt, dataset, checkpoint_dir, *stop_after, common),
        Command::Resume {
            checkpoint_dir,
            seed_prompt,
            dataset,
            common,
        } => cmd_resume(checkpoint_dir, seed_prompt, dataset, common),
        Command::Predict {
            checkpoint,
            input,
            output,
            common,
        } => cmd_predict(checkpoint, input, output, common),
        Command::Eval {
            checkpoint,
            dataset,
            metrics_out,
            positive_label,
            common,
        } => cmd_eval(
            checkpoint,
            dataset,
            metrics_out.as_deref(),
            positive_label.as_deref(),
            common,
        ),
        Command::Ablate {
            mode,
            seed_prompt,
            dataset,
            common,
        } => cmd_ablate(*mode, seed_prompt, dataset, common),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
