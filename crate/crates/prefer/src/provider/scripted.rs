//! Deterministic offline providers.
//!
//! [`ScriptedProvider`] replays a transcript file keyed on request
//! fingerprints (request kind + substrings). [`WeakClassifierProvider`] is
//! the test oracle: given per-round correctness maps it answers solving,
//! confidence, feedback, and refine requests so a whole boosting run can
//! execute offline.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Example, LabelSpace};

use super::{Completion, CompletionRequest, Provider};

/// What an engine-issued request is asking for, recovered from markers in
/// the built-in templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Solving,
    Forward,
    Backward,
    Feedback,
    Refine,
}

impl RequestKind {
    pub fn classify(user_text: &str) -> RequestKind {
        if user_text.contains("reasons why the prompt") {
            RequestKind::Feedback
        } else if user_text.contains("Wrap the new instruction")
            || user_text.contains("Wrap the rewritten instruction")
        {
            RequestKind::Refine
        } else if user_text.contains("should be excluded") {
            RequestKind::Backward
        } else if user_text.contains("confidence from 0 to 1") {
            RequestKind::Forward
        } else {
            RequestKind::Solving
        }
    }
}

fn fingerprint(request: &CompletionRequest) -> String {
    let kind = RequestKind::classify(&request.user_text);
    let head: String = request.user_text.chars().take(120).collect();
    format!("kind={kind:?}, text starts: {head:?}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<RequestKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    substring: Option<OneOrMany>,
}

impl MatchRule {
    pub fn new(kind: Option<RequestKind>, substrings: Vec<String>) -> Self {
        Self {
            kind,
            substring: Some(OneOrMany::Many(substrings)),
        }
    }

    fn substrings(&self) -> Vec<&str> {
        match &self.substring {
            None => vec![],
            Some(OneOrMany::One(s)) => vec![s.as_str()],
            Some(OneOrMany::Many(v)) => v.iter().map(String::as_str).collect(),
        }
    }

    fn matches(&self, request: &CompletionRequest) -> bool {
        if let Some(kind) = self.kind {
            if RequestKind::classify(&request.user_text) != kind {
                return false;
            }
        }
        self.substrings()
            .iter()
            .all(|s| request.user_text.contains(s))
    }
}

/// One transcript record: `{"match": {"kind": ..., "substring": ...}, "response": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(rename = "match")]
    pub rule: MatchRule,
    pub response: String,
}

/// Replays pre-registered responses; identical request always yields the
/// identical response. First matching entry wins.
pub struct ScriptedProvider {
    entries: Vec<TranscriptEntry>,
    count: AtomicU64,
}

impl ScriptedProvider {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        Self {
            entries,
            count: AtomicU64::new(0),
        }
    }

    /// Load a line-delimited transcript file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (lineno, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(line).map_err(|e| {
                Error::Parse(format!(
                    "transcript {} line {}: {e}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        request.validate()?;
        let entry = self
            .entries
            .iter()
            .find(|e| e.rule.matches(request))
            .ok_or_else(|| Error::UnscriptedRequest(fingerprint(request)))?;
        self.count.fetch_add(1, Ordering::SeqCst);
        Ok(Completion {
            text: entry.response.clone(),
            usage_tokens: 0,
        })
    }

    fn call_count(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }

    fn reset_count(&self) {
        self.count.store(0, Ordering::SeqCst);
    }
}

/// Scripted weak classifiers for whole-loop offline runs.
///
/// Round `t`'s correctness map says which example ids prompt `t` answers
/// correctly. A correct answer puts confidence 0.9 on the gold label,
/// otherwise on a fixed wrong label. Feedback requests get canned
/// `<START>...<END>` reasons; refine requests get the next round's
/// instruction. Rounds are recognized by the `[round t]` tag embedded in
/// the instruction text; examples by their field values.
pub struct WeakClassifierProvider {
    rounds: Vec<HashMap<String, bool>>,
    examples: Vec<Example>,
    labels: LabelSpace,
    count: AtomicU64,
}

impl WeakClassifierProvider {
    pub fn new(
        rounds: Vec<HashMap<String, bool>>,
        examples: Vec<Example>,
        labels: LabelSpace,
    ) -> Self {
        Self {
            rounds,
            examples,
            labels,
            count: AtomicU64::new(0),
        }
    }

    /// Single-round constructor: one accuracy map covering the training set.
    pub fn single(
        accuracy_map: HashMap<String, bool>,
        examples: Vec<Example>,
        labels: LabelSpace,
    ) -> Self {
        Self::new(vec![accuracy_map], examples, labels)
    }

    /// Instruction text for the seed prompt this provider understands.
    pub fn seed_instruction() -> String {
        Self::instruction_for_round(0)
    }

    pub fn instruction_for_round(round: usize) -> String {
        format!("Scripted task instruction [round {round}]")
    }

    fn round_of(&self, text: &str) -> usize {
        let round = text
            .find("[round ")
            .and_then(|at| {
                let rest = &text[at + 7..];
                let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
                digits.parse::<usize>().ok()
            })
            .unwrap_or(0);
        round.min(self.rounds.len().saturating_sub(1))
    }

    fn example_of(&self, text: &str) -> Option<&Example> {
        self.examples.iter().find(|ex| {
            !ex.fields.is_empty() && ex.fields.values().all(|v| text.contains(v.as_str()))
        })
    }

    fn answer_for(&self, text: &str) -> Result<(usize, bool)> {
        let round = self.round_of(text);
        let example = self.example_of(text).ok_or_else(|| {
            Error::UnscriptedRequest(format!("no example matches request text: {:.80}", text))
        })?;
        let correct = *self.rounds[round].get(&example.id).ok_or_else(|| {
            Error::UnscriptedRequest(format!(
                "example `{}` not covered by round {round} accuracy map",
                example.id
            ))
        })?;
        let gold = example
            .gold
            .as_deref()
            .and_then(|g| self.labels.find(g))
            .ok_or_else(|| {
                Error::UnscriptedRequest(format!("example `{}` has no usable gold label", example.id))
            })?;
        let answer = if correct {
            gold
        } else {
            (0..self.labels.k()).find(|&i| i != gold).unwrap()
        };
        Ok((answer, correct))
    }

    fn confidence_listing(&self, favored: usize, exclusion: bool) -> String {
        (0..self.labels.k())
            .map(|i| {
                let high = (i == favored) != exclusion;
                format!(
                    "{}: {}",
                    self.labels.label(i),
                    if high { "0.9" } else { "0.1" }
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Provider for WeakClassifierProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        request.validate()?;
        let text = &request.user_text;
        let response = match RequestKind::classify(text) {
            RequestKind::Feedback => {
                "<START>scripted reason one<END>\n<START>scripted reason two<END>".to_string()
            }
            RequestKind::Refine => {
                let next = self.round_of(text) + 1;
                format!("<START>{}<END>", Self::instruction_for_round(next))
            }
            RequestKind::Forward => {
                let (answer, _) = self.answer_for(text)?;
                self.confidence_listing(answer, false)
            }
            RequestKind::Backward => {
                let (answer, _) = self.answer_for(text)?;
                self.confidence_listing(answer, true)
            }
            RequestKind::Solving => {
                let (answer, _) = self.answer_for(text)?;
                format!("Scripted reasoning. Label: {}", self.labels.label(answer))
            }
        };
        self.count.fetch_add(1, Ordering::SeqCst);
        Ok(Completion {
            text: response,
            usage_tokens: 0,
        })
    }

    fn call_count(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }

    fn reset_count(&self) {
        self.count.store(0, Ordering::SeqCst);
    }
}
