//! Command-line behavior: prediction output, metrics, ablation reports,
//! and the failure modes a user actually hits (empty ensemble, stale
//! config, unknown provider).

use prefer::persistence::{save_checkpoint, Checkpoint, RngState, CHECKPOINT_VERSION};
use prefer::types::{Ensemble, LabelSpace};

mod common;

use common::CliFixture;

#[test]
fn predict_then_eval_recovers_every_label() {
    let fx = CliFixture::new();
    fx.train("ckpt", None);

    let predictions_path = fx.path("predictions.jsonl");
    fx.run_ok(&[
        "predict",
        "--checkpoint",
        &fx.path("ckpt/checkpoint.json"),
        "--input",
        &fx.path("data.jsonl"),
        "--output",
        &predictions_path,
        "--provider",
        &fx.provider_arg(),
    ]);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&predictions_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    // each learner is wrong on one distinct example; two weighted votes
    // always beat the third, so the output is exactly the gold labeling
    for (i, line) in lines.iter().enumerate() {
        assert_eq!(line["id"], format!("ex{i}"));
        assert_eq!(line["label"], common::LABELS[i % 2]);
        assert_eq!(line["per_learner"].as_array().unwrap().len(), 3);
    }

    let metrics_path = fx.path("metrics.jsonl");
    fx.run_ok(&[
        "eval",
        "--checkpoint",
        &fx.path("ckpt/checkpoint.json"),
        "--dataset",
        &fx.path("data.jsonl"),
        "--metrics-out",
        &metrics_path,
        "--provider",
        &fx.provider_arg(),
    ]);
    let metrics: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&metrics_path).unwrap().trim()).unwrap();
    assert_eq!(metrics["f1"], 1.0);
    assert_eq!(metrics["accuracy"], 1.0);
    assert_eq!(metrics["examples"], 4);
}

#[test]
fn ablation_report_carries_per_iteration_records_and_a_summary() {
    let fx = CliFixture::new();
    let output = fx.run_ok(&[
        "ablate",
        "--mode",
        "full",
        "--seed-prompt",
        &fx.path("task.json"),
        "--dataset",
        &fx.path("data.jsonl"),
        "--provider",
        &fx.provider_arg(),
        "--k",
        "4",
        "--iters",
        "3",
        "--seed",
        "7",
    ]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    let lines: Vec<serde_json::Value> = stdout
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4, "three iteration records plus a summary");
    for (i, line) in lines[..3].iter().enumerate() {
        assert_eq!(line["iteration"], i as u64);
        assert_eq!(line["calls"], 2 * 4 + 2);
    }
    let summary = &lines[3];
    assert_eq!(summary["summary"], true);
    assert_eq!(summary["learners"], 3);
    assert_eq!(summary["f1"], 1.0);
}

#[test]
fn predicting_with_an_untrained_checkpoint_fails_cleanly() {
    let fx = CliFixture::new();
    let labels = LabelSpace::new(common::LABELS).unwrap();
    let empty = Checkpoint {
        version: CHECKPOINT_VERSION,
        ensemble: Ensemble {
            learners: vec![],
            label_space: labels,
            seed: 7,
            config_digest: "d".into(),
        },
        dataset_weights: vec![],
        completed_iterations: 0,
        rng_state: RngState { seed: 7, counter: 1 },
        provider_calls_total: 0,
        config_digest: "d".into(),
        next_prompt: None,
        prediction_template: "Sentence 1: {text1}\nSentence 2: {text2}".into(),
    };
    let path = fx.dir.path().join("empty.json");
    save_checkpoint(&path, &empty).unwrap();

    let output = fx.run(&[
        "predict",
        "--checkpoint",
        &path.display().to_string(),
        "--input",
        &fx.path("data.jsonl"),
        "--output",
        &fx.path("out.jsonl"),
        "--provider",
        &fx.provider_arg(),
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("ensemble empty"), "stderr was: {stderr}");
}

#[test]
fn resume_rejects_a_changed_configuration() {
    let fx = CliFixture::new();
    fx.train("ckpt", Some(2));
    // a different iteration budget changes the run's digest
    let output = fx.resume("ckpt", "4");
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("config digest mismatch"), "stderr was: {stderr}");
}

#[test]
fn unknown_provider_is_rejected() {
    let fx = CliFixture::new();
    let output = fx.run(&[
        "train",
        "--seed-prompt",
        &fx.path("task.json"),
        "--dataset",
        &fx.path("data.jsonl"),
        "--checkpoint-dir",
        &fx.path("ckpt"),
        "--provider",
        "psychic",
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unknown provider"), "stderr was: {stderr}");
}
