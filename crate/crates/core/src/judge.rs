//! The supervisory judge layer: per-attribute correctness verdicts over
//! child reports, OCR similarity scoring, and report-level aggregation.
//!
//! Complex compliance checks are decomposed into one focused prompt per
//! attribute rather than a single omnibus prompt, and verdicts are binary
//! or scalar in [0, 1] — never integer rating scales.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    retrying_invoke, BackendRouter, ImagePayload, ModelSpec, PromptBundle, RetryPolicy,
};
use crate::schema::{extract_json_object, AttributeResult, AttributeSpec, ComplianceReport};

/// The two admissible verdict shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum VerdictForm {
    Binary { correct: bool },
    /// Score constrained to [0, 1] at every construction site.
    Scalar { score: f64 },
}

impl VerdictForm {
    /// The verdict's contribution to an aggregate mean.
    pub fn as_score(&self) -> f64 {
        match self {
            VerdictForm::Binary { correct } => {
                if *correct {
                    1.0
                } else {
                    0.0
                }
            }
            VerdictForm::Scalar { score } => *score,
        }
    }
}

/// One judged attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub attribute: String,
    #[serde(flatten)]
    pub form: VerdictForm,
    #[serde(default)]
    pub rationale: String,
}

/// Judge outcome for one attribute: a scored verdict, or abstention when
/// the judge call itself failed (a transport failure is not evidence about
/// the child).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JudgedVerdict {
    Scored(Verdict),
    Abstained { attribute: String, reason: String },
}

impl JudgedVerdict {
    pub fn verdict(&self) -> Option<&Verdict> {
        match self {
            JudgedVerdict::Scored(v) => Some(v),
            JudgedVerdict::Abstained { .. } => None,
        }
    }
}

/// Per-attribute verdicts for one child report, with the mean score over
/// scored (non-abstained) attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub creative_id: String,
    pub child_model_id: String,
    pub mother_model_id: String,
    pub verdicts: BTreeMap<String, JudgedVerdict>,
    /// None when every attribute abstained.
    pub aggregate_score: Option<f64>,
}

/// A worked example embedded in the judge prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewshotExemplar {
    pub candidate_answer: String,
    pub expected_verdict: String,
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judgeable attribute set is empty")]
    EmptyJudgeSet,
    #[error("attribute {0:?} is not present in the child report")]
    AttributeNotInReport(String),
}

#[derive(Debug, Error)]
#[error("cannot extract a verdict: {0}")]
pub struct VerdictParseError(String);

/// Builds the focused single-attribute judge prompt: the task description,
/// the child's answer verbatim, optional few-shot exemplars, and a demand
/// for a binary or in-[0,1] scalar answer.
pub fn build_judge_prompt(
    attribute: &AttributeSpec,
    child_value: &AttributeResult,
    image: Option<&ImagePayload>,
    fewshot: &[FewshotExemplar],
) -> PromptBundle {
    let system = "You are a meticulous evaluator verifying one compliance answer produced \
                  by another model for the attached image. Respond with a single JSON \
                  object: either {\"verdict\": true|false, \"rationale\": \"...\"} for \
                  categorical answers, or {\"score\": <number between 0 and 1>, \
                  \"rationale\": \"...\"} when partial credit applies. Never use rating \
                  scales."
        .to_string();
    let mut user = format!(
        "Task under evaluation: \"{}\" — {}\n",
        attribute.name, attribute.description
    );
    if let Some(guidance) = &attribute.guidance {
        user.push_str(&format!("Guidance given to the candidate: {guidance}\n"));
    }
    user.push_str(&format!(
        "\nCandidate model's answer: {}\n",
        child_value.value.to_natural_json()
    ));
    if !fewshot.is_empty() {
        user.push_str("\nExamples:\n");
        for exemplar in fewshot {
            user.push_str(&format!(
                "- answer {} -> {}\n",
                exemplar.candidate_answer, exemplar.expected_verdict
            ));
        }
    }
    user.push_str("\nIs the candidate's answer correct for the attached image?");
    let mut prompt = PromptBundle { system, user, image: None };
    if let Some(image) = image {
        prompt = prompt.with_image(image.clone());
    }
    prompt
}

/// Extracts a binary or scalar verdict from judge output. Scores outside
/// [0, 1] are rejected so no out-of-range verdict can ever be recorded.
pub fn parse_verdict(text: &str) -> Result<(VerdictForm, String), VerdictParseError> {
    if let Ok((value, _)) = extract_json_object(text) {
        let rationale = value
            .get("rationale")
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string();
        if let Some(verdict) = value.get("verdict") {
            if let Some(correct) = bool_like(verdict) {
                return Ok((VerdictForm::Binary { correct }, rationale));
            }
            return Err(VerdictParseError(format!("unusable verdict field {verdict}")));
        }
        if let Some(score) = value.get("score") {
            let score = score
                .as_f64()
                .ok_or_else(|| VerdictParseError(format!("non-numeric score {score}")))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(VerdictParseError(format!("score {score} outside [0, 1]")));
            }
            return Ok((VerdictForm::Scalar { score }, rationale));
        }
        return Err(VerdictParseError("object has neither verdict nor score".to_string()));
    }
    // Plain-text fallback.
    match text.trim().to_ascii_lowercase().as_str() {
        "correct" | "true" | "yes" => Ok((VerdictForm::Binary { correct: true }, String::new())),
        "incorrect" | "false" | "no" => {
            Ok((VerdictForm::Binary { correct: false }, String::new()))
        }
        other => Err(VerdictParseError(format!("unrecognized verdict text {other:?}"))),
    }
}

fn bool_like(value: &serde_json::Value) -> Option<bool> {
    match value {
        serde_json::Value::Bool(b) => Some(*b),
        serde_json::Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "correct" | "yes" => Some(true),
            "false" | "incorrect" | "no" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

/// Mean over scored verdicts; None when nothing was scored.
pub fn aggregate_score(verdicts: &BTreeMap<String, JudgedVerdict>) -> Option<f64> {
    let scores: Vec<f64> = verdicts
        .values()
        .filter_map(|v| v.verdict().map(|verdict| verdict.form.as_score()))
        .collect();
    if scores.is_empty() {
        None
    } else {
        Some(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

/// Judges the given attributes of one child report: one mother call per
/// attribute. A call that exhausts its retries records an abstention and
/// never fails the report.
#[allow(clippy::too_many_arguments)]
pub fn judge_report(
    router: &BackendRouter,
    mother: &ModelSpec,
    child_report: &ComplianceReport,
    judgeable: &[String],
    suite: &[AttributeSpec],
    image: Option<&ImagePayload>,
    fewshot: &[FewshotExemplar],
    policy: &RetryPolicy,
) -> Result<JudgeReport, JudgeError> {
    if judgeable.is_empty() {
        return Err(JudgeError::EmptyJudgeSet);
    }
    let mut names: Vec<&String> = judgeable.iter().collect();
    names.sort();
    names.dedup();
    let mut verdicts = BTreeMap::new();
    for name in names {
        let child_value = child_report
            .results
            .get(name)
            .ok_or_else(|| JudgeError::AttributeNotInReport(name.clone()))?;
        let attribute = suite
            .iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| JudgeError::AttributeNotInReport(name.clone()))?;
        let prompt = build_judge_prompt(attribute, child_value, image, fewshot);
        let judged = match retrying_invoke(router, mother, &prompt, policy, |raw| {
            parse_verdict(&raw.text)
        }) {
            Ok((_, (form, rationale))) => {
                JudgedVerdict::Scored(Verdict { attribute: name.clone(), form, rationale })
            }
            Err(exhausted) => JudgedVerdict::Abstained {
                attribute: name.clone(),
                reason: exhausted.to_string(),
            },
        };
        verdicts.insert(name.clone(), judged);
    }
    let aggregate = aggregate_score(&verdicts);
    Ok(JudgeReport {
        creative_id: child_report.creative_id.clone(),
        child_model_id: child_report.model_id.clone(),
        mother_model_id: mother.model_id.clone(),
        verdicts,
        aggregate_score: aggregate,
    })
}

/// Case-folds, strips non-alphanumeric characters to spaces, and splits on
/// whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Cosine similarity of term-frequency vectors over normalized tokens.
/// Both empty -> 1.0; exactly one empty -> 0.0. Symmetric and in [0, 1].
pub fn ocr_similarity(reference: &str, hypothesis: &str) -> f64 {
    let ref_tokens = normalize_tokens(reference);
    let hyp_tokens = normalize_tokens(hypothesis);
    match (ref_tokens.is_empty(), hyp_tokens.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        (false, false) => {}
    }
    let tf = |tokens: &[String]| -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for t in tokens {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
        counts
    };
    let a = tf(&ref_tokens);
    let b = tf(&hyp_tokens);
    let dot: f64 = a
        .iter()
        .filter_map(|(t, &ca)| b.get(t).map(|&cb| (ca * cb) as f64))
        .sum();
    let norm_sq = |v: &BTreeMap<String, u64>| v.values().map(|&c| (c * c) as f64).sum::<f64>();
    // One square root keeps identical vectors at exactly 1.0.
    let denom = (norm_sq(&a) * norm_sq(&b)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (dot / denom).clamp(0.0, 1.0)
}

/// OCR scoring: the scalar similarity is always recorded; binary
/// correctness at the threshold is derived for accuracy tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcrScore {
    pub similarity: f64,
    pub threshold: f64,
    pub correct: bool,
}

pub fn score_ocr_verdict(reference: &str, hypothesis: &str, threshold: f64) -> OcrScore {
    let similarity = ocr_similarity(reference, hypothesis);
    OcrScore { similarity, threshold, correct: similarity >= threshold }
}

impl OcrScore {
    pub fn scalar_verdict(&self, attribute: &str) -> Verdict {
        Verdict {
            attribute: attribute.to_string(),
            form: VerdictForm::Scalar { score: self.similarity },
            rationale: format!("cosine similarity {:.4}", self.similarity),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{prompt_digest, FixtureEntry, MockFixtures};
    use crate::backends::TokenUsage;
    use crate::schema::{AttributeKind, AttributeValue};

    fn spec(name: &str, kind: AttributeKind) -> AttributeSpec {
        AttributeSpec::new(name, kind, "desc")
    }

    fn result(value: AttributeValue) -> AttributeResult {
        AttributeResult { raw_model_text: value.to_natural_json().to_string(), value }
    }

    fn child_report(attrs: Vec<(&str, AttributeValue)>) -> ComplianceReport {
        ComplianceReport {
            creative_id: "c1".into(),
            model_id: "child".into(),
            results: attrs.into_iter().map(|(n, v)| (n.to_string(), result(v))).collect(),
            usage: TokenUsage::default(),
            latency_seconds: 0.0,
            timestamp: 0,
        }
    }

    #[test]
    fn judge_prompt_contains_child_answer_verbatim() {
        let attribute = spec("Logo Detection", AttributeKind::Boolean);
        let child = result(AttributeValue::Boolean(true));
        let prompt = build_judge_prompt(&attribute, &child, None, &[]);
        assert!(prompt.user.contains("true"));
        assert!(prompt.user.contains("Logo Detection"));
    }

    #[test]
    fn judge_prompt_never_requests_a_rating_scale() {
        let attribute = spec("Grammar Check", AttributeKind::Boolean);
        let child = result(AttributeValue::Boolean(false));
        let prompt = build_judge_prompt(&attribute, &child, None, &[]);
        let all = format!("{} {}", prompt.system, prompt.user);
        for forbidden in ["1-5", "1 to 5", "scale of", "Likert", "out of 10"] {
            assert!(!all.contains(forbidden), "prompt requests {forbidden:?}");
        }
    }

    #[test]
    fn fewshot_exemplars_serialize_in_order() {
        let attribute = spec("Grammar Check", AttributeKind::Boolean);
        let child = result(AttributeValue::Boolean(true));
        let fewshot = vec![
            FewshotExemplar { candidate_answer: "first".into(), expected_verdict: "correct".into() },
            FewshotExemplar {
                candidate_answer: "second".into(),
                expected_verdict: "incorrect".into(),
            },
        ];
        let prompt = build_judge_prompt(&attribute, &child, None, &fewshot);
        let first = prompt.user.find("first").unwrap();
        let second = prompt.user.find("second").unwrap();
        assert!(first < second);
    }

    #[test]
    fn parse_verdict_accepts_common_shapes() {
        let (form, rationale) =
            parse_verdict("{\"verdict\": true, \"rationale\": \"fine\"}").unwrap();
        assert_eq!(form, VerdictForm::Binary { correct: true });
        assert_eq!(rationale, "fine");
        let (form, _) = parse_verdict("sure: {\"verdict\": \"incorrect\"}").unwrap();
        assert_eq!(form, VerdictForm::Binary { correct: false });
        let (form, _) = parse_verdict("{\"score\": 0.75}").unwrap();
        assert_eq!(form, VerdictForm::Scalar { score: 0.75 });
        let (form, _) = parse_verdict("correct").unwrap();
        assert_eq!(form, VerdictForm::Binary { correct: true });
    }

    #[test]
    fn parse_verdict_rejects_out_of_range_scores() {
        assert!(parse_verdict("{\"score\": 1.5}").is_err());
        assert!(parse_verdict("{\"score\": -0.1}").is_err());
        assert!(parse_verdict("on a scale I give it a 4").is_err());
    }

    fn judge_setup(
        attrs: Vec<(&str, AttributeValue, &str)>,
    ) -> (BackendRouter, ModelSpec, ComplianceReport, Vec<AttributeSpec>, Vec<String>) {
        let mother = ModelSpec::mock("mother");
        let mut suite = Vec::new();
        let mut fixtures = MockFixtures::default();
        let report =
            child_report(attrs.iter().map(|(n, v, _)| (*n, v.clone())).collect::<Vec<_>>());
        let mut judgeable = Vec::new();
        for (name, value, verdict_text) in &attrs {
            let attribute = spec(name, value.kind());
            let prompt = build_judge_prompt(&attribute, &result(value.clone()), None, &[]);
            fixtures.entries.insert(
                prompt_digest(&mother.model_id, &prompt),
                FixtureEntry { text: verdict_text.to_string(), ..FixtureEntry::default() },
            );
            suite.push(attribute);
            judgeable.push(name.to_string());
        }
        (BackendRouter::mock_only(fixtures), mother, report, suite, judgeable)
    }

    #[test]
    fn all_correct_aggregates_to_one() {
        let attrs: Vec<(&str, AttributeValue, &str)> = vec![
            ("A", AttributeValue::Boolean(true), "{\"verdict\": true}"),
            ("B", AttributeValue::Boolean(false), "{\"verdict\": true}"),
            ("C", AttributeValue::Text("x".into()), "{\"verdict\": true}"),
            ("D", AttributeValue::Boolean(true), "{\"verdict\": true}"),
            ("E", AttributeValue::Boolean(true), "{\"verdict\": true}"),
        ];
        let (router, mother, report, suite, judgeable) = judge_setup(attrs);
        let policy = RetryPolicy { max_retries: 0, base_backoff: 0.0 };
        let judged =
            judge_report(&router, &mother, &report, &judgeable, &suite, None, &[], &policy)
                .unwrap();
        assert_eq!(judged.aggregate_score, Some(1.0));
        // Exactly one mother call per judged attribute.
        assert_eq!(router.mock_backend().unwrap().invocation_count(), 5);
    }

    #[test]
    fn abstentions_are_excluded_from_the_aggregate() {
        // 3 correct, 1 incorrect, 1 abstained -> 0.75 over the 4 scored.
        let attrs: Vec<(&str, AttributeValue, &str)> = vec![
            ("A", AttributeValue::Boolean(true), "{\"verdict\": true}"),
            ("B", AttributeValue::Boolean(true), "{\"verdict\": true}"),
            ("C", AttributeValue::Boolean(true), "{\"verdict\": true}"),
            ("D", AttributeValue::Boolean(true), "{\"verdict\": false}"),
            ("E", AttributeValue::Boolean(true), "never parses"),
        ];
        let (router, mother, report, suite, judgeable) = judge_setup(attrs);
        let policy = RetryPolicy { max_retries: 1, base_backoff: 0.0 };
        let judged =
            judge_report(&router, &mother, &report, &judgeable, &suite, None, &[], &policy)
                .unwrap();
        assert_eq!(judged.aggregate_score, Some(0.75));
        assert!(matches!(judged.verdicts["E"], JudgedVerdict::Abstained { .. }));
    }

    #[test]
    fn empty_judgeable_set_is_an_error() {
        let (router, mother, report, suite, _) =
            judge_setup(vec![("A", AttributeValue::Boolean(true), "{\"verdict\": true}")]);
        let err = judge_report(
            &router,
            &mother,
            &report,
            &[],
            &suite,
            None,
            &[],
            &RetryPolicy::default(),
        )
        .unwrap_err();
        assert!(matches!(err, JudgeError::EmptyJudgeSet));
    }

    #[test]
    fn ocr_similarity_hand_values() {
        assert_eq!(ocr_similarity("SALE today", "sale today"), 1.0);
        let sim = ocr_similarity("buy now today", "buy now");
        assert!((sim - 2.0 / 6.0f64.sqrt()).abs() < 1e-12, "{sim}");
        assert_eq!(ocr_similarity("abc", "xyz"), 0.0);
        assert_eq!(ocr_similarity("", ""), 1.0);
        assert_eq!(ocr_similarity("words", ""), 0.0);
        // Punctuation and case are stripped before comparison.
        assert_eq!(ocr_similarity("Buy, Now!", "buy now"), 1.0);
    }

    #[test]
    fn ocr_similarity_is_symmetric_and_bounded() {
        let samples = [
            ("the quick brown fox", "the quick fox"),
            ("one two three", "three two one"),
            ("", "nonempty"),
            ("a a a b", "a b b b"),
        ];
        for (a, b) in samples {
            let ab = ocr_similarity(a, b);
            let ba = ocr_similarity(b, a);
            assert!((ab - ba).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn ocr_verdict_thresholding() {
        let score = score_ocr_verdict("buy now today", "buy now", 0.8);
        assert!(score.correct, "0.8165 >= 0.8");
        assert!(!score_ocr_verdict("buy now today", "buy now", 1.0).correct);
        assert!(score_ocr_verdict("abc", "xyz", 0.0).correct);
        let verdict = score.scalar_verdict("OCR Text");
        assert!(
            matches!(verdict.form, VerdictForm::Scalar { score } if (0.0..=1.0).contains(&score))
        );
    }
}
