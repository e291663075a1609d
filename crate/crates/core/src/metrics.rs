//! Agreement statistics, cost/latency accounting, robustness deltas, and
//! the model-selection policy.
//!
//! Cohen's kappa is chance-corrected agreement (p_o - p_e) / (1 - p_e)
//! over a shared finite label alphabet; cost is exact linear arithmetic
//! over per-1M-token rates with no internal rounding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentationKind;
use crate::backends::{ModelSpec, TokenUsage};
use crate::engine::EvaluationRun;
use crate::judge::{ocr_similarity, JudgeReport};
use crate::schema::AttributeValue;
use crate::store::AnnotationSet;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label vectors are empty")]
    EmptyInput,
    #[error("no reference label for creative {creative:?} attribute {attribute:?}")]
    MissingReference { creative: String, attribute: String },
    #[error("augmented run for {kind:?} lacks pair ({creative}, {model}) present in baseline")]
    MissingVariant { kind: AugmentationKind, creative: String, model: String },
    #[error("no rate card for model {0:?}")]
    UnknownModel(String),
    #[error("no candidate model clears the accuracy floor")]
    NoEligibleModel,
    #[error("current model {0:?} has no scorecard")]
    CurrentModelMissing(String),
    #[error("scorecard set is empty")]
    EmptyScorecards,
}

/// Confusion counts and agreement statistics between two label sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    /// Sorted label alphabet observed across both raters.
    pub categories: Vec<String>,
    /// confusion[i][j] counts positions where rater A said categories[i]
    /// and rater B said categories[j].
    pub confusion: Vec<Vec<u64>>,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub kappa: f64,
    pub accuracy: f64,
    pub n: usize,
    /// Set when p_e = 1 (both raters constant on one category); kappa is
    /// then reported as 1.0, the truthful summary of total agreement.
    pub kappa_undefined: bool,
}

/// Cohen's kappa between two equal-length label vectors.
pub fn cohen_kappa(labels_a: &[String], labels_b: &[String]) -> Result<AgreementStats, MetricsError> {
    if labels_a.len() != labels_b.len() {
        return Err(MetricsError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut categories: Vec<String> = labels_a.iter().chain(labels_b).cloned().collect();
    categories.sort();
    categories.dedup();
    let index: BTreeMap<&str, usize> =
        categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let k = categories.len();
    let mut confusion = vec![vec![0u64; k]; k];
    for (a, b) in labels_a.iter().zip(labels_b) {
        confusion[index[a.as_str()]][index[b.as_str()]] += 1;
    }
    let n = labels_a.len() as f64;
    let observed: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let p_o = observed as f64 / n;
    let mut p_e = 0.0;
    for i in 0..k {
        let row: u64 = confusion[i].iter().sum();
        let col: u64 = (0..k).map(|r| confusion[r][i]).sum();
        p_e += (row as f64) * (col as f64) / (n * n);
    }
    let kappa_undefined = p_e >= 1.0;
    let kappa = if kappa_undefined {
        // p_e = 1 forces both raters constant on the same category, hence
        // p_o = 1: total agreement.
        1.0
    } else {
        ((p_o - p_e) / (1.0 - p_e)).clamp(-1.0, 1.0)
    };
    Ok(AgreementStats {
        categories,
        confusion,
        observed_agreement: p_o,
        expected_agreement: p_e,
        kappa,
        accuracy: p_o,
        n: labels_a.len(),
        kappa_undefined,
    })
}

/// Fraction of positions where the two vectors agree; identical to
/// `cohen_kappa(..).observed_agreement`.
pub fn accuracy(labels_a: &[String], labels_b: &[String]) -> Result<f64, MetricsError> {
    if labels_a.len() != labels_b.len() {
        return Err(MetricsError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let matches = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count();
    Ok(matches as f64 / labels_a.len() as f64)
}

/// Exact spend for one call: tokens/1e6 times the per-1M rates. No
/// internal rounding; presentation layers round for display.
pub fn cost_of(usage: &TokenUsage, spec: &ModelSpec) -> f64 {
    usage.input_tokens as f64 / 1e6 * spec.input_rate
        + usage.output_tokens as f64 / 1e6 * spec.output_rate
}

/// How many times cheaper `candidate` is than `current`, per image.
pub fn cost_reduction_factor(current_cost_per_image: f64, candidate_cost_per_image: f64) -> f64 {
    if candidate_cost_per_image <= 0.0 {
        return f64::INFINITY;
    }
    current_cost_per_image / candidate_cost_per_image
}

/// Spend record derived from one report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub model_id: String,
    pub usage: TokenUsage,
    pub cost_usd: f64,
    pub latency_seconds: f64,
}

/// Whether a model's answer agrees with a reference label, by kind.
///
/// Booleans and sectors compare exactly; free text compares by OCR cosine
/// similarity against the threshold; lists compare as case-folded sets;
/// suggestions compare by presence only (both empty or both non-empty).
pub fn value_matches(
    model: &AttributeValue,
    reference: &AttributeValue,
    ocr_threshold: f64,
) -> bool {
    match (model, reference) {
        (AttributeValue::Boolean(a), AttributeValue::Boolean(b)) => a == b,
        (AttributeValue::Position(a), AttributeValue::Position(b)) => a == b,
        (AttributeValue::Text(a), AttributeValue::Text(b)) => {
            ocr_similarity(b, a) >= ocr_threshold
        }
        (AttributeValue::TextList(a), AttributeValue::TextList(b))
        | (AttributeValue::ColorList(a), AttributeValue::ColorList(b)) => {
            fold_set(a) == fold_set(b)
        }
        (AttributeValue::Suggestion(a), AttributeValue::Suggestion(b)) => {
            a.trim().is_empty() == b.trim().is_empty()
        }
        _ => false,
    }
}

fn fold_set(items: &[String]) -> std::collections::BTreeSet<String> {
    items.iter().map(|s| s.trim().to_lowercase()).collect()
}

/// A canonical string label for agreement vectors.
pub fn value_label(value: &AttributeValue) -> String {
    match value {
        AttributeValue::Boolean(b) => b.to_string(),
        AttributeValue::Position(p) => p.label().to_string(),
        AttributeValue::Text(s) | AttributeValue::Suggestion(s) => s.trim().to_lowercase(),
        AttributeValue::TextList(items) | AttributeValue::ColorList(items) => {
            let mut folded: Vec<String> = fold_set(items).into_iter().collect();
            folded.sort();
            folded.join("|")
        }
    }
}

/// Per-model summary: per-attribute accuracy (percent), their mean and
/// median, and mean cost/latency per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScorecard {
    pub model_id: String,
    /// Attribute -> accuracy in percent (0-100).
    pub per_attribute: BTreeMap<String, f64>,
    pub mean_accuracy: f64,
    pub median_accuracy: f64,
    pub mean_cost_per_image: f64,
    pub mean_latency_seconds: f64,
    pub images_evaluated: usize,
}

/// What model answers are scored against.
pub enum Reference<'a> {
    Annotations(&'a AnnotationSet),
    Judgments(&'a [JudgeReport]),
}

#[derive(Debug, Clone)]
pub struct ScorecardOptions {
    /// Attributes to score; defaults to those covered by the reference.
    pub attributes: Option<Vec<String>>,
    pub ocr_threshold: f64,
}

impl Default for ScorecardOptions {
    fn default() -> Self {
        Self { attributes: None, ocr_threshold: 0.8 }
    }
}

fn median(sorted: &mut [f64]) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Builds one scorecard per model in the run, scoring successful reports
/// against the reference. Failed outcomes contribute nothing to accuracy;
/// they are visible in the run itself.
pub fn scorecards(
    run: &EvaluationRun,
    specs: &[ModelSpec],
    reference: &Reference<'_>,
    opts: &ScorecardOptions,
) -> Result<Vec<ModelScorecard>, MetricsError> {
    let rate_card: BTreeMap<&str, &ModelSpec> =
        specs.iter().map(|s| (s.model_id.as_str(), s)).collect();
    let attributes: Vec<String> = match (&opts.attributes, reference) {
        (Some(attrs), _) => attrs.clone(),
        (None, Reference::Annotations(set)) => set.attributes(),
        (None, Reference::Judgments(reports)) => {
            let mut names: Vec<String> = reports
                .iter()
                .flat_map(|r| r.verdicts.keys().cloned())
                .collect();
            names.sort();
            names.dedup();
            names
        }
    };
    let mut cards = Vec::new();
    for model_id in &run.model_ids {
        let spec = rate_card
            .get(model_id.as_str())
            .ok_or_else(|| MetricsError::UnknownModel(model_id.clone()))?;
        let reports: Vec<_> = run
            .reports()
            .filter(|r| &r.model_id == model_id)
            .collect();
        let mut per_attribute = BTreeMap::new();
        for attribute in &attributes {
            let mut matches = 0usize;
            let mut total = 0usize;
            for report in &reports {
                let Some(result) = report.results.get(attribute) else { continue };
                let correct = match reference {
                    Reference::Annotations(set) => {
                        let label = set.get(&report.creative_id, attribute).ok_or_else(|| {
                            MetricsError::MissingReference {
                                creative: report.creative_id.clone(),
                                attribute: attribute.clone(),
                            }
                        })?;
                        if value_matches(&result.value, label, opts.ocr_threshold) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Reference::Judgments(judged) => {
                        let verdict = judged
                            .iter()
                            .find(|j| {
                                j.creative_id == report.creative_id
                                    && j.child_model_id == *model_id
                            })
                            .and_then(|j| j.verdicts.get(attribute))
                            .and_then(|j| j.verdict());
                        match verdict {
                            Some(v) => v.form.as_score(),
                            // Unjudged or abstained: skip the sample.
                            None => {
                                continue;
                            }
                        }
                    }
                };
                total += 1;
                if correct >= 0.5 {
                    matches += 1;
                }
            }
            if total > 0 {
                per_attribute.insert(attribute.clone(), 100.0 * matches as f64 / total as f64);
            }
        }
        let accuracies: Vec<f64> = per_attribute.values().copied().collect();
        let mean_accuracy = if accuracies.is_empty() {
            0.0
        } else {
            accuracies.iter().sum::<f64>() / accuracies.len() as f64
        };
        let median_accuracy = median(&mut accuracies.clone());
        let (mut cost_sum, mut latency_sum) = (0.0, 0.0);
        for report in &reports {
            cost_sum += cost_of(&report.usage, spec);
            latency_sum += report.latency_seconds;
        }
        let images = reports.len();
        cards.push(ModelScorecard {
            model_id: model_id.clone(),
            per_attribute,
            mean_accuracy,
            median_accuracy,
            mean_cost_per_image: if images > 0 { cost_sum / images as f64 } else { 0.0 },
            mean_latency_seconds: if images > 0 { latency_sum / images as f64 } else { 0.0 },
            images_evaluated: images,
        });
    }
    Ok(cards)
}

/// Accuracy table across augmentation variants: rows are the baseline
/// ("actual") plus one row per kind; cells are percent accuracy pooled
/// over all models in each run, absent where not applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTable {
    pub metrics: Vec<String>,
    pub rows: Vec<RobustnessRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub variant: String,
    /// Metric -> percent accuracy; None renders as a not-applicable cell.
    pub cells: BTreeMap<String, Option<f64>>,
}

pub fn robustness_table(
    baseline: &EvaluationRun,
    augmented: &BTreeMap<AugmentationKind, EvaluationRun>,
    reference: &AnnotationSet,
    metric_attributes: &[String],
    not_applicable: &[(AugmentationKind, String)],
    ocr_threshold: f64,
) -> Result<RobustnessTable, MetricsError> {
    // Every baseline pair must exist in every augmented run.
    for (kind, run) in augmented {
        for key in baseline.outcomes.keys() {
            if !run.outcomes.contains_key(key) {
                return Err(MetricsError::MissingVariant {
                    kind: *kind,
                    creative: key.0.clone(),
                    model: key.1.clone(),
                });
            }
        }
    }
    let score_run = |run: &EvaluationRun| -> Result<BTreeMap<String, Option<f64>>, MetricsError> {
        let mut cells = BTreeMap::new();
        for attribute in metric_attributes {
            let mut matches = 0usize;
            let mut total = 0usize;
            for report in run.reports() {
                let Some(result) = report.results.get(attribute) else { continue };
                let label = reference.get(&report.creative_id, attribute).ok_or_else(|| {
                    MetricsError::MissingReference {
                        creative: report.creative_id.clone(),
                        attribute: attribute.clone(),
                    }
                })?;
                total += 1;
                if value_matches(&result.value, label, ocr_threshold) {
                    matches += 1;
                }
            }
            let cell =
                if total > 0 { Some(100.0 * matches as f64 / total as f64) } else { None };
            cells.insert(attribute.clone(), cell);
        }
        Ok(cells)
    };
    let mut rows =
        vec![RobustnessRow { variant: "actual".to_string(), cells: score_run(baseline)? }];
    for (kind, run) in augmented {
        let mut cells = score_run(run)?;
        for (na_kind, attribute) in not_applicable {
            if na_kind == kind {
                cells.insert(attribute.clone(), None);
            }
        }
        rows.push(RobustnessRow { variant: kind.label().to_string(), cells });
    }
    Ok(RobustnessTable { metrics: metric_attributes.to_vec(), rows })
}

/// Linear selection policy over scorecards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    /// Candidates below this mean accuracy (percent) are excluded.
    pub min_accuracy_floor: f64,
    pub accuracy_weight: f64,
    pub cost_weight: f64,
    pub latency_weight: f64,
    pub current_model_id: String,
}

impl SelectionPolicy {
    /// Default deployment profile: keep accuracy above the floor, then let
    /// cost dominate the choice.
    pub fn default_profile(current_model_id: &str) -> Self {
        Self {
            min_accuracy_floor: 93.0,
            accuracy_weight: 1.0,
            cost_weight: 10.0,
            latency_weight: 1.0,
            current_model_id: current_model_id.to_string(),
        }
    }

    fn validate(&self) -> bool {
        (self.accuracy_weight > 0.0 || self.cost_weight > 0.0 || self.latency_weight > 0.0)
            && self.accuracy_weight >= 0.0
            && self.cost_weight >= 0.0
            && self.latency_weight >= 0.0
    }
}

/// Outcome of applying a selection policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Recommendation {
    Keep { model_id: String, justification: String },
    SwitchTo { model_id: String, justification: String },
}

impl Recommendation {
    pub fn model_id(&self) -> &str {
        match self {
            Recommendation::Keep { model_id, .. } | Recommendation::SwitchTo { model_id, .. } => {
                model_id
            }
        }
    }
}

/// Weighted score after min-max normalization of cost and latency over the
/// eligible set: `aw*acc - cw*norm_cost - lw*norm_latency`.
pub fn policy_scores(
    eligible: &[&ModelScorecard],
    policy: &SelectionPolicy,
) -> BTreeMap<String, f64> {
    let min_max = |values: Vec<f64>| -> (f64, f64) {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    };
    let (cost_min, cost_max) = min_max(eligible.iter().map(|c| c.mean_cost_per_image).collect());
    let (lat_min, lat_max) = min_max(eligible.iter().map(|c| c.mean_latency_seconds).collect());
    let normalize = |value: f64, min: f64, max: f64| {
        if max > min {
            (value - min) / (max - min)
        } else {
            0.0
        }
    };
    eligible
        .iter()
        .map(|card| {
            let score = policy.accuracy_weight * card.mean_accuracy
                - policy.cost_weight * normalize(card.mean_cost_per_image, cost_min, cost_max)
                - policy.latency_weight
                    * normalize(card.mean_latency_seconds, lat_min, lat_max);
            (card.model_id.clone(), score)
        })
        .collect()
}

/// Ranks eligible candidates by weighted score and recommends keeping or
/// switching. Ties break toward the current model for stability.
pub fn recommend_switch(
    cards: &[ModelScorecard],
    policy: &SelectionPolicy,
) -> Result<Recommendation, MetricsError> {
    if cards.is_empty() {
        return Err(MetricsError::EmptyScorecards);
    }
    if !cards.iter().any(|c| c.model_id == policy.current_model_id) {
        return Err(MetricsError::CurrentModelMissing(policy.current_model_id.clone()));
    }
    debug_assert!(policy.validate(), "selection policy needs a positive weight");
    let eligible: Vec<&ModelScorecard> = cards
        .iter()
        .filter(|c| c.mean_accuracy >= policy.min_accuracy_floor)
        .collect();
    if eligible.is_empty() {
        return Err(MetricsError::NoEligibleModel);
    }
    let scores = policy_scores(&eligible, policy);
    let mut ranked: Vec<(&String, &f64)> = scores.iter().collect();
    // Highest score first; name ascending keeps equal scores deterministic.
    ranked.sort_by(|(na, sa), (nb, sb)| {
        sb.partial_cmp(sa).unwrap().then_with(|| na.cmp(nb))
    });
    let (top_model, top_score) = (ranked[0].0.clone(), *ranked[0].1);
    let current_score = scores.get(&policy.current_model_id).copied();
    let keep = match current_score {
        Some(score) => top_model == policy.current_model_id || score >= top_score,
        None => false,
    };
    if keep {
        Ok(Recommendation::Keep {
            model_id: policy.current_model_id.clone(),
            justification: format!(
                "current model {} remains top-ranked (score {:.4})",
                policy.current_model_id,
                current_score.unwrap_or_default()
            ),
        })
    } else {
        let current_card = cards.iter().find(|c| c.model_id == policy.current_model_id);
        let top_card = cards.iter().find(|c| c.model_id == top_model);
        let cost_note = match (current_card, top_card) {
            (Some(cur), Some(top)) if top.mean_cost_per_image > 0.0 => {
                format!(
                    "; per-image cost falls {:.1}x ({:.4} -> {:.4} USD) at mean accuracy {:.2}% vs {:.2}%",
                    cost_reduction_factor(cur.mean_cost_per_image, top.mean_cost_per_image),
                    cur.mean_cost_per_image,
                    top.mean_cost_per_image,
                    top.mean_accuracy,
                    cur.mean_accuracy,
                )
            }
            _ => String::new(),
        };
        Ok(Recommendation::SwitchTo {
            model_id: top_model.clone(),
            justification: format!(
                "{} outranks current {} (score {:.4} vs {:.4}){}",
                top_model,
                policy.current_model_id,
                top_score,
                current_score.map(|s| s.to_string()).unwrap_or_else(|| "below floor".into()),
                cost_note
            ),
        })
    }
}
