//! Prompt template rendering and structured output parsing.
//!
//! Renders the solving / feedback / refine requests from typed inputs and
//! parses labels, confidence listings, reflections, and refined
//! instructions back out of model text. Templates use `{placeholder}`
//! syntax with no conditionals or loops.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Example, LabelSpace, Prediction, Prompt, Reflection};

pub const START_MARKER: &str = "<START>";
pub const END_MARKER: &str = "<END>";

const SOLVING_TEMPLATE: &str = "\
# Task
{instruction}
{demonstrations}
# Output format
{output_format}

# Prediction
{prediction}
Label:[]";

const FEEDBACK_TEMPLATE: &str = "\
I'm trying to write a Textual Entailment
task prompt. My current prompt is: {prompt}
But this prompt gets the following examples
wrong: {error_info}

Give {num_feedbacks} reasons why the prompt
could have gotten these examples wrong. Wrap
each reason with <START> and <END>.";

const REFINE_TEMPLATE: &str = "\
I'm improving a task prompt. My current prompt is: {prompt}

It has these problems:
{reasons}

Write one improved task instruction that fixes these problems while keeping the task the same. Wrap the new instruction with <START> and <END>.";

const SYNONYM_TEMPLATE: &str = "\
Rewrite the following task instruction preserving its meaning. Wrap the rewritten instruction with <START> and <END>.

{prompt}";

const FORWARD_CLAUSE: &str = "\
# Confidence
For each candidate label, give your confidence from 0 to 1 that it is the correct answer for the prediction above. Answer with one line per candidate, in the form `label: score`.
Candidates: {labels}";

const BACKWARD_CLAUSE: &str = "\
# Confidence
For each candidate label, give your confidence from 0 to 1 that it should be excluded, i.e. that it is NOT the correct answer for the prediction above. Answer with one line per candidate, in the form `label: score`.
Candidates: {labels}";

/// Default prediction section layout, matching the two-sentence entailment
/// tasks. Override per task via [`TemplateSet::with_prediction`].
const PREDICTION_TEMPLATE: &str = "Sentence 1: {text1}\nSentence 2: {text2}";

/// The full set of templates used by one run.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub solving: String,
    pub prediction: String,
    pub feedback: String,
    pub refine: String,
    pub synonym_rewrite: String,
    pub forward_clause: String,
    pub backward_clause: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            solving: SOLVING_TEMPLATE.into(),
            prediction: PREDICTION_TEMPLATE.into(),
            feedback: FEEDBACK_TEMPLATE.into(),
            refine: REFINE_TEMPLATE.into(),
            synonym_rewrite: SYNONYM_TEMPLATE.into(),
            forward_clause: FORWARD_CLAUSE.into(),
            backward_clause: BACKWARD_CLAUSE.into(),
        }
    }
}

impl TemplateSet {
    pub fn with_prediction(prediction: &str) -> Self {
        Self {
            prediction: prediction.into(),
            ..Self::default()
        }
    }

    /// Override templates from files in `dir` (solving.txt, prediction.txt,
    /// feedback.txt, refine.txt, synonym_rewrite.txt, forward_clause.txt,
    /// backward_clause.txt). Missing files keep the built-in.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut ts = Self::default();
        let slots: [(&str, &mut String); 7] = [
            ("solving.txt", &mut ts.solving),
            ("prediction.txt", &mut ts.prediction),
            ("feedback.txt", &mut ts.feedback),
            ("refine.txt", &mut ts.refine),
            ("synonym_rewrite.txt", &mut ts.synonym_rewrite),
            ("forward_clause.txt", &mut ts.forward_clause),
            ("backward_clause.txt", &mut ts.backward_clause),
        ];
        for (name, slot) in slots {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(ts)
    }
}

/// Substitute `{name}` placeholders. Unknown placeholder -> error naming it.
/// Substituted values are not re-scanned.
pub fn fill(template: &str, vars: &BTreeMap<&str, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let bytes = template.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = template[i + 1..].find('}') {
                let name = &template[i + 1..i + 1 + end];
                if !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    match vars.get(name) {
                        Some(value) => out.push_str(value),
                        None => return Err(Error::MissingPlaceholder(name.into())),
                    }
                    i += end + 2;
                    continue;
                }
            }
        }
        let ch = template[i..].chars().next().unwrap();
        out.push(ch);
        i += ch.len_utf8();
    }
    Ok(out)
}

fn fill_fields(template: &str, fields: &BTreeMap<String, String>) -> Result<String> {
    let vars: BTreeMap<&str, String> = fields
        .iter()
        .map(|(k, v)| (k.as_str(), v.clone()))
        .collect();
    fill(template, &vars)
}

/// One misclassified example's context for the feedback prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorEntry {
    pub fields: BTreeMap<String, String>,
    pub gold: String,
    pub answered: Option<String>,
}

/// The formatted block of misclassified examples fed back to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorInfo {
    pub entries: Vec<ErrorEntry>,
}

impl ErrorInfo {
    fn format(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            let fields = entry
                .fields
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join("; ");
            let answered = entry.answered.as_deref().unwrap_or("(abstained)");
            let _ = write!(
                out,
                "\nInput: {fields}  Gold: {}  Model answered: {answered}",
                entry.gold
            );
        }
        out
    }
}

pub fn render_solving(ts: &TemplateSet, prompt: &Prompt, example: &Example) -> Result<String> {
    if prompt.instruction.trim().is_empty() {
        return Err(Error::Contract("prompt instruction is empty".into()));
    }
    let prediction = fill_fields(&ts.prediction, &example.fields)?;
    let mut demonstrations = String::new();
    if !prompt.demonstrations.is_empty() {
        demonstrations.push_str("\n# Demonstrations\n");
        for (i, demo) in prompt.demonstrations.iter().enumerate() {
            if i > 0 {
                demonstrations.push_str("\n\n");
            }
            let body = fill_fields(&ts.prediction, &demo.fields)?;
            let _ = write!(demonstrations, "{body}\nLabel: {}", demo.label);
        }
        demonstrations.push('\n');
    }
    let vars = BTreeMap::from([
        ("instruction", prompt.instruction.clone()),
        ("output_format", prompt.output_format.clone()),
        ("demonstrations", demonstrations),
        ("prediction", prediction),
    ]);
    fill(&ts.solving, &vars)
}

pub fn render_feedback(
    ts: &TemplateSet,
    prompt: &Prompt,
    error_info: &ErrorInfo,
    num_feedbacks: usize,
) -> Result<String> {
    if num_feedbacks < 1 {
        return Err(Error::Contract("num_feedbacks must be >= 1".into()));
    }
    if error_info.entries.is_empty() {
        return Err(Error::Contract("error_info is empty".into()));
    }
    let vars = BTreeMap::from([
        ("prompt", prompt.instruction.clone()),
        ("error_info", error_info.format()),
        ("num_feedbacks", num_feedbacks.to_string()),
    ]);
    fill(&ts.feedback, &vars)
}

pub fn render_refine(ts: &TemplateSet, prompt: &Prompt, reflection: &Reflection) -> Result<String> {
    if reflection.reasons.is_empty() {
        return Err(Error::Contract("reflection has no reasons".into()));
    }
    let reasons = reflection
        .reasons
        .iter()
        .map(|r| format!("- {r}"))
        .collect::<Vec<_>>()
        .join("\n");
    let vars = BTreeMap::from([
        ("prompt", prompt.instruction.clone()),
        ("reasons", reasons),
    ]);
    fill(&ts.refine, &vars)
}

/// The no-feedback ablation's refine request: rewrite without error info.
pub fn render_synonym_rewrite(ts: &TemplateSet, prompt: &Prompt) -> Result<String> {
    let vars = BTreeMap::from([("prompt", prompt.instruction.clone())]);
    fill(&ts.synonym_rewrite, &vars)
}

/// The confidence-elicitation request: the solving prompt followed by the
/// forward or backward clause.
pub fn render_confidence(
    ts: &TemplateSet,
    prompt: &Prompt,
    example: &Example,
    labels: &LabelSpace,
    backward: bool,
) -> Result<String> {
    let solving = render_solving(ts, prompt, example)?;
    let clause_tpl = if backward {
        &ts.backward_clause
    } else {
        &ts.forward_clause
    };
    let vars = BTreeMap::from([("labels", labels.labels().join(", "))]);
    let clause = fill(clause_tpl, &vars)?;
    Ok(format!("{solving}\n\n{clause}"))
}

/// Every maximal substring strictly between a `<START>` and the next
/// `<END>`, trimmed, in order. Empty-after-trim segments are dropped.
pub fn extract_marked(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(START_MARKER) {
        rest = &rest[start + START_MARKER.len()..];
        match rest.find(END_MARKER) {
            Some(end) => {
                let segment = rest[..end].trim();
                if !segment.is_empty() {
                    out.push(segment.to_string());
                }
                rest = &rest[end + END_MARKER.len()..];
            }
            None => break,
        }
    }
    out
}

pub fn parse_reflections(text: &str, source_prompt_id: &str, iteration: u32) -> Result<Reflection> {
    let reasons = extract_marked(text);
    if reasons.is_empty() {
        return Err(Error::Parse(format!(
            "no <START>/<END> reasons found in feedback response: {}",
            snippet(text)
        )));
    }
    Ok(Reflection {
        reasons,
        source_prompt_id: source_prompt_id.into(),
        iteration,
    })
}

/// The refined instruction: first marked segment of the refine response.
pub fn parse_new_instruction(text: &str) -> Result<String> {
    extract_marked(text).into_iter().next().ok_or_else(|| {
        Error::Parse(format!(
            "no <START>/<END> instruction found in refine response: {}",
            snippet(text)
        ))
    })
}

fn snippet(text: &str) -> String {
    let t = text.trim();
    if t.len() > 120 {
        let cut = (0..=120).rev().find(|&i| t.is_char_boundary(i)).unwrap_or(0);
        format!("{}...", &t[..cut])
    } else {
        t.to_string()
    }
}

fn token_positions(haystack_lower: &str, needle_lower: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = haystack_lower[from..].find(needle_lower) {
        let at = from + pos;
        let before_ok = haystack_lower[..at]
            .chars()
            .next_back()
            .map_or(true, |c| !c.is_alphanumeric());
        let after_ok = haystack_lower[at + needle_lower.len()..]
            .chars()
            .next()
            .map_or(true, |c| !c.is_alphanumeric());
        if before_ok && after_ok {
            out.push(at);
        }
        from = at + needle_lower.len().max(1);
    }
    out
}

/// Label extraction: the label whose token occurs in the final line that
/// contains any label token; ties broken by last occurrence. `None` on
/// abstention (no label token anywhere).
pub fn parse_label(text: &str, labels: &LabelSpace) -> Prediction {
    let lowered: Vec<String> = labels
        .labels()
        .iter()
        .map(|l| l.trim().to_lowercase())
        .collect();
    for line in text.lines().rev() {
        let line_lower = line.to_lowercase();
        let mut best: Option<(usize, usize)> = None; // (position, label index)
        for (idx, needle) in lowered.iter().enumerate() {
            if let Some(&pos) = token_positions(&line_lower, needle).last() {
                if best.map_or(true, |(p, _)| pos >= p) {
                    best = Some((pos, idx));
                }
            }
        }
        if let Some((_, idx)) = best {
            return Some(idx);
        }
    }
    None
}

/// One confidence score per label out of a `label: score` listing, clamped
/// to [0, 1]. Any label missing a score is a parse error.
pub fn parse_confidences(text: &str, labels: &LabelSpace) -> Result<Vec<f64>> {
    let mut scores: Vec<Option<f64>> = vec![None; labels.k()];
    for line in text.lines() {
        let Some((left, right)) = line.split_once(':') else {
            continue;
        };
        let name = left.trim_start_matches(['-', '*', ' ', '\t']).trim();
        let Some(idx) = labels.find(name) else {
            continue;
        };
        let value = right.trim().split_whitespace().next().unwrap_or("");
        if let Ok(v) = value.parse::<f64>() {
            scores[idx] = Some(v.clamp(0.0, 1.0));
        }
    }
    scores
        .into_iter()
        .enumerate()
        .map(|(idx, s)| {
            s.ok_or_else(|| {
                Error::Parse(format!(
                    "no confidence score for label `{}` in: {}",
                    labels.label(idx),
                    snippet(text)
                ))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn prompt() -> Prompt {
        Prompt {
            id: "p0".into(),
            instruction: "Given two sentences, determine whether sentence 2 provides an answer to the question posed by sentence 1.".into(),
            output_format: "Explain your reasoning process in one sentence and Answer \"Yes\" or \"No\" as the label.".into(),
            demonstrations: vec![],
            iteration: 0,
        }
    }

    fn example() -> Example {
        Example {
            id: "e0".into(),
            fields: BTreeMap::from([
                ("text1".into(), "Who wrote it?".into()),
                ("text2".into(), "It was written by Ada.".into()),
            ]),
            gold: Some("Yes".into()),
        }
    }

    fn labels() -> LabelSpace {
        LabelSpace::new(["Yes", "No"]).unwrap()
    }

    #[test]
    fn solving_has_listing_structure() {
        let text = render_solving(&TemplateSet::default(), &prompt(), &example()).unwrap();
        for needle in ["# Task", "# Output format", "# Prediction", "Label:[]"] {
            assert!(text.contains(needle), "missing {needle} in:\n{text}");
        }
        assert!(text.contains("Sentence 1: Who wrote it?"));
        assert!(text.contains("Sentence 2: It was written by Ada."));
    }

    #[test]
    fn solving_missing_field_names_placeholder() {
        let mut ex = example();
        ex.fields.remove("text2");
        let err = render_solving(&TemplateSet::default(), &prompt(), &ex).unwrap_err();
        match err {
            Error::MissingPlaceholder(name) => assert_eq!(name, "text2"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn solving_rejects_empty_instruction() {
        let mut p = prompt();
        p.instruction = "  ".into();
        assert!(render_solving(&TemplateSet::default(), &p, &example()).is_err());
    }

    #[test]
    fn solving_renders_demonstrations() {
        let mut p = prompt();
        p.demonstrations.push(Demonstration {
            fields: BTreeMap::from([
                ("text1".into(), "Demo question?".into()),
                ("text2".into(), "Demo answer.".into()),
            ]),
            label: "No".into(),
        });
        let text = render_solving(&TemplateSet::default(), &p, &example()).unwrap();
        assert!(text.contains("# Demonstrations"));
        assert!(text.contains("Demo question?"));
        assert!(text.contains("Label: No"));
    }

    use crate::types::Demonstration;

    #[test]
    fn feedback_contains_count_and_markers() {
        let info = ErrorInfo {
            entries: vec![ErrorEntry {
                fields: BTreeMap::from([("text1".into(), "Who wrote it?".into())]),
                gold: "Yes".into(),
                answered: Some("No".into()),
            }],
        };
        let text = render_feedback(&TemplateSet::default(), &prompt(), &info, 2).unwrap();
        assert!(text.contains("Give 2 reasons"));
        assert!(text.contains("<START> and <END>"));
        assert!(text.contains("Who wrote it?"));
        assert!(text.contains("Gold: Yes"));
        assert!(text.contains("Model answered: No"));
    }

    #[test]
    fn feedback_preconditions() {
        let info = ErrorInfo { entries: vec![] };
        assert!(render_feedback(&TemplateSet::default(), &prompt(), &info, 2).is_err());
        let info = ErrorInfo {
            entries: vec![ErrorEntry {
                fields: BTreeMap::new(),
                gold: "Yes".into(),
                answered: None,
            }],
        };
        assert!(render_feedback(&TemplateSet::default(), &prompt(), &info, 0).is_err());
    }

    #[test]
    fn refine_lists_reasons_and_instruction() {
        let reflection = Reflection {
            reasons: vec!["too vague".into(), "ignores negation".into()],
            source_prompt_id: "p0".into(),
            iteration: 0,
        };
        let text = render_refine(&TemplateSet::default(), &prompt(), &reflection).unwrap();
        assert!(text.contains("- too vague"));
        assert!(text.contains("- ignores negation"));
        assert!(text.contains(&prompt().instruction));
        assert!(text.contains("one improved task instruction"));
        assert!(text.contains("<START> and <END>"));

        let empty = Reflection {
            reasons: vec![],
            source_prompt_id: "p0".into(),
            iteration: 0,
        };
        assert!(render_refine(&TemplateSet::default(), &prompt(), &empty).is_err());
    }

    #[test]
    fn reflections_parse_in_order() {
        let r = parse_reflections(
            "<START>too vague<END><START>ignores negation<END>",
            "p0",
            0,
        )
        .unwrap();
        assert_eq!(r.reasons, vec!["too vague", "ignores negation"]);

        let r = parse_reflections("noise <START> a <END> noise", "p0", 0).unwrap();
        assert_eq!(r.reasons, vec!["a"]);

        assert!(parse_reflections("no markers here", "p0", 0).is_err());
    }

    #[test]
    fn label_parsing_rules() {
        let ls = labels();
        assert_eq!(parse_label("reasoning...\nLabel: Yes", &ls), Some(0));
        assert_eq!(
            parse_label("Yes and No both plausible; final answer: No", &ls),
            Some(1)
        );
        assert_eq!(parse_label("I cannot decide", &ls), None);
        // token boundaries: "Yesterday" is not "Yes"
        assert_eq!(parse_label("Yesterday it rained. Label: No", &ls), Some(1));
        // final line with a token wins over earlier lines
        assert_eq!(parse_label("Label: No\nLabel: Yes", &ls), Some(0));
    }

    #[test]
    fn confidence_parsing_rules() {
        let ls = labels();
        assert_eq!(
            parse_confidences("Yes: 0.9\nNo: 0.1", &ls).unwrap(),
            vec![0.9, 0.1]
        );
        assert_eq!(
            parse_confidences("Yes: 1.4\nNo: -0.2", &ls).unwrap(),
            vec![1.0, 0.0]
        );
        assert!(parse_confidences("Yes: high\nNo: 0.2", &ls).is_err());
        assert!(parse_confidences("Yes: 0.9", &ls).is_err());
    }
}
