//! Shared fixture for CLI-level tests: a four-example binary task, a task
//! definition file, and a scripted transcript that answers every provider
//! exchange of a three-iteration run. Round r gets example r wrong, so the
//! errors are 1/4, 1/6, 1/10 and every ensemble weight stays positive.
//!
//! Each test target compiles this module separately and uses a different
//! subset of it.
#![allow(dead_code)]

use std::process::{Command, Output};

use prefer::provider::{MatchRule, RequestKind, TranscriptEntry};
use prefer::templates::{END_MARKER, START_MARKER};

pub const LABELS: [&str; 2] = ["Yes", "No"];

pub struct CliFixture {
    pub dir: tempfile::TempDir,
}

impl CliFixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();

        let mut dataset = String::new();
        for i in 0..4 {
            dataset.push_str(&format!(
                "{}\n",
                serde_json::json!({
                    "id": format!("ex{i}"),
                    "fields": {
                        "text1": format!("question ex{i}"),
                        "text2": format!("candidate answer ex{i}"),
                    },
                    "label": LABELS[i % 2],
                })
            ));
        }
        std::fs::write(dir.path().join("data.jsonl"), dataset).unwrap();

        let task = serde_json::json!({
            "instruction": "Decide whether the answer fits the question. [round 0]",
            "output_format": "Answer with exactly one label, Yes or No.",
            "labels": LABELS,
            "prediction": "Sentence 1: {text1}\nSentence 2: {text2}",
        });
        std::fs::write(
            dir.path().join("task.json"),
            serde_json::to_string_pretty(&task).unwrap(),
        )
        .unwrap();

        let mut entries: Vec<TranscriptEntry> = Vec::new();
        for round in 0..3 {
            let tag = format!("[round {round}]");
            for i in 0..4 {
                let gold = i % 2;
                let voted = if i == round { 1 - gold } else { gold };
                let listing = |favored: usize, inverted: bool| {
                    (0..2)
                        .map(|c| {
                            let high = (c == favored) != inverted;
                            format!("{}: {}", LABELS[c], if high { "0.9" } else { "0.1" })
                        })
                        .collect::<Vec<_>>()
                        .join("\n")
                };
                let keys = vec![tag.clone(), format!("question ex{i}")];
                entries.push(TranscriptEntry {
                    rule: MatchRule::new(Some(RequestKind::Forward), keys.clone()),
                    response: listing(voted, false),
                });
                entries.push(TranscriptEntry {
                    rule: MatchRule::new(Some(RequestKind::Backward), keys),
                    response: listing(voted, true),
                });
            }
            entries.push(TranscriptEntry {
                rule: MatchRule::new(Some(RequestKind::Feedback), vec![tag.clone()]),
                response: format!(
                    "{START_MARKER}the instruction is too vague{END_MARKER}\n\
                     {START_MARKER}edge cases are not covered{END_MARKER}"
                ),
            });
            entries.push(TranscriptEntry {
                rule: MatchRule::new(Some(RequestKind::Refine), vec![tag]),
                response: format!(
                    "{START_MARKER}Decide whether the answer fits the question. [round {}]{END_MARKER}",
                    round + 1
                ),
            });
        }
        let transcript: String = entries
            .iter()
            .map(|e| format!("{}\n", serde_json::to_string(e).unwrap()))
            .collect();
        std::fs::write(dir.path().join("transcript.jsonl"), transcript).unwrap();

        Self { dir }
    }

    pub fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    pub fn provider_arg(&self) -> String {
        format!("scripted:{}", self.path("transcript.jsonl"))
    }

    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_prefer"))
            .args(args)
            .output()
            .unwrap()
    }

    pub fn run_ok(&self, args: &[&str]) -> Output {
        let output = self.run(args);
        assert!(
            output.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        output
    }

    /// Train three iterations into `checkpoint_dir`, optionally stopping
    /// early with a resumable checkpoint.
    pub fn train(&self, checkpoint_dir: &str, stop_after: Option<usize>) {
        let checkpoint = self.path(checkpoint_dir);
        let provider = self.provider_arg();
        let task = self.path("task.json");
        let data = self.path("data.jsonl");
        let mut args = vec![
            "train",
            "--seed-prompt",
            &task,
            "--dataset",
            &data,
            "--checkpoint-dir",
            &checkpoint,
            "--provider",
            &provider,
            "--k",
            "4",
            "--iters",
            "3",
            "--seed",
            "7",
        ];
        let stop;
        if let Some(n) = stop_after {
            stop = n.to_string();
            args.extend(["--stop-after", &stop]);
        }
        self.run_ok(&args);
    }

    pub fn resume(&self, checkpoint_dir: &str, iters: &str) -> Output {
        self.run(&[
            "resume",
            "--checkpoint-dir",
            &self.path(checkpoint_dir),
            "--seed-prompt",
            &self.path("task.json"),
            "--dataset",
            &self.path("data.jsonl"),
            "--provider",
            &self.provider_arg(),
            "--k",
            "4",
            "--iters",
            iters,
            "--seed",
            "7",
        ])
    }

    pub fn checkpoint_bytes(&self, checkpoint_dir: &str) -> Vec<u8> {
        std::fs::read(self.dir.path().join(checkpoint_dir).join("checkpoint.json")).unwrap()
    }
}
