//! Compliance attribute taxonomy, structured report validation, and
//! spatial position binning.
//!
//! An attribute suite describes what a candidate model must report about a
//! creative and what shape each answer takes. Model output is free text
//! wrapped around a JSON object; [`validate_report`] is tolerant of key
//! order and prose fencing but strict on attribute coverage and value
//! shape, so a malformed generation surfaces as a retry-eligible error.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Output shape accepted for one compliance attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Boolean,
    PositionSector,
    Text,
    TextList,
    ColorList,
    Suggestion,
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AttributeKind::Boolean => "boolean",
            AttributeKind::PositionSector => "position_sector",
            AttributeKind::Text => "text",
            AttributeKind::TextList => "text_list",
            AttributeKind::ColorList => "color_list",
            AttributeKind::Suggestion => "suggestion",
        };
        f.write_str(s)
    }
}

/// One entry of an attribute suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    pub description: String,
    /// Extra prompt guidance, e.g. representative phrase lists for
    /// call-to-action and urgency detection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<String>,
}

impl AttributeSpec {
    pub fn new(name: &str, kind: AttributeKind, description: &str) -> Self {
        Self {
            name: name.to_string(),
            kind,
            description: description.to_string(),
            guidance: None,
        }
    }

    pub fn with_guidance(mut self, guidance: String) -> Self {
        self.guidance = Some(guidance);
        self
    }
}

/// Spatial bin for locating elements such as logos and call-to-action
/// phrases. Center is the distinguished highest-priority sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionSector {
    Center,
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl PositionSector {
    pub const ALL: [PositionSector; 5] = [
        PositionSector::Center,
        PositionSector::TopLeft,
        PositionSector::TopRight,
        PositionSector::BottomLeft,
        PositionSector::BottomRight,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PositionSector::Center => "Center",
            PositionSector::TopLeft => "Top-Left",
            PositionSector::TopRight => "Top-Right",
            PositionSector::BottomLeft => "Bottom-Left",
            PositionSector::BottomRight => "Bottom-Right",
        }
    }

    /// Parses a sector name, ignoring case, spaces, hyphens and underscores.
    pub fn parse(text: &str) -> Option<PositionSector> {
        let folded: String = text
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '-' && *c != '_')
            .flat_map(char::to_lowercase)
            .collect();
        match folded.as_str() {
            "center" | "centre" | "middle" => Some(PositionSector::Center),
            "topleft" => Some(PositionSector::TopLeft),
            "topright" => Some(PositionSector::TopRight),
            "bottomleft" => Some(PositionSector::BottomLeft),
            "bottomright" => Some(PositionSector::BottomRight),
            _ => None,
        }
    }
}

/// Maximum number of entries a color-list answer may carry.
pub const MAX_COLORS: usize = 3;

/// A single attribute answer. The variant must match the owning
/// [`AttributeSpec::kind`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum AttributeValue {
    Boolean(bool),
    Position(PositionSector),
    Text(String),
    TextList(Vec<String>),
    /// Dominant color names, lowercase, at most [`MAX_COLORS`] entries.
    ColorList(Vec<String>),
    Suggestion(String),
}

impl AttributeValue {
    pub fn kind(&self) -> AttributeKind {
        match self {
            AttributeValue::Boolean(_) => AttributeKind::Boolean,
            AttributeValue::Position(_) => AttributeKind::PositionSector,
            AttributeValue::Text(_) => AttributeKind::Text,
            AttributeValue::TextList(_) => AttributeKind::TextList,
            AttributeValue::ColorList(_) => AttributeKind::ColorList,
            AttributeValue::Suggestion(_) => AttributeKind::Suggestion,
        }
    }

    /// Renders the value the way a model would emit it inside the report
    /// JSON object.
    pub fn to_natural_json(&self) -> serde_json::Value {
        match self {
            AttributeValue::Boolean(b) => serde_json::Value::Bool(*b),
            AttributeValue::Position(p) => serde_json::Value::String(p.label().to_string()),
            AttributeValue::Text(s) | AttributeValue::Suggestion(s) => {
                serde_json::Value::String(s.clone())
            }
            AttributeValue::TextList(items) | AttributeValue::ColorList(items) => {
                serde_json::Value::Array(
                    items
                        .iter()
                        .map(|s| serde_json::Value::String(s.clone()))
                        .collect(),
                )
            }
        }
    }

    /// Coerces a natural JSON value into the shape `kind` demands.
    ///
    /// Lenient where model output commonly wobbles (boolean casing, a lone
    /// string where a list is expected, one level of `{"value": ...}`
    /// nesting), strict everywhere else.
    pub fn from_natural_json(
        value: &serde_json::Value,
        kind: AttributeKind,
    ) -> Result<AttributeValue, ()> {
        // Unwrap one level of object nesting around the payload.
        let value = match value {
            serde_json::Value::Object(map) => map
                .get("value")
                .or_else(|| map.get("result"))
                .ok_or(())?,
            other => other,
        };
        match kind {
            AttributeKind::Boolean => match value {
                serde_json::Value::Bool(b) => Ok(AttributeValue::Boolean(*b)),
                serde_json::Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                    "true" => Ok(AttributeValue::Boolean(true)),
                    "false" => Ok(AttributeValue::Boolean(false)),
                    _ => Err(()),
                },
                _ => Err(()),
            },
            AttributeKind::PositionSector => match value {
                serde_json::Value::String(s) => {
                    PositionSector::parse(s).map(AttributeValue::Position).ok_or(())
                }
                _ => Err(()),
            },
            AttributeKind::Text => match value {
                serde_json::Value::String(s) => Ok(AttributeValue::Text(s.clone())),
                _ => Err(()),
            },
            AttributeKind::Suggestion => match value {
                serde_json::Value::String(s) => Ok(AttributeValue::Suggestion(s.clone())),
                _ => Err(()),
            },
            AttributeKind::TextList => {
                string_list(value).map(AttributeValue::TextList).ok_or(())
            }
            AttributeKind::ColorList => {
                let items = string_list(value).ok_or(())?;
                if items.len() > MAX_COLORS {
                    return Err(());
                }
                Ok(AttributeValue::ColorList(
                    items.iter().map(|s| s.to_lowercase()).collect(),
                ))
            }
        }
    }
}

fn string_list(value: &serde_json::Value) -> Option<Vec<String>> {
    match value {
        serde_json::Value::Null => Some(Vec::new()),
        serde_json::Value::String(s) => Some(vec![s.clone()]),
        serde_json::Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect(),
        _ => None,
    }
}

/// A validated attribute answer plus the raw model text it was parsed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeResult {
    pub value: AttributeValue,
    pub raw_model_text: String,
}

/// A candidate model's structured answers for one creative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub creative_id: String,
    pub model_id: String,
    /// One entry per attribute of the suite that produced the report.
    pub results: BTreeMap<String, AttributeResult>,
    pub usage: crate::backends::TokenUsage,
    /// Wall-clock seconds spent on the (final) model call.
    pub latency_seconds: f64,
    /// Unix epoch seconds.
    pub timestamp: u64,
}

impl ComplianceReport {
    /// Renders the results back into the JSON object a model would emit.
    /// Re-validating the rendered text reproduces the results exactly.
    pub fn render_results_json(&self) -> String {
        render_results_json(&self.results)
    }
}

/// Canonical JSON rendering of a results map (sorted keys, compact values).
pub fn render_results_json(results: &BTreeMap<String, AttributeResult>) -> String {
    let object: serde_json::Map<String, serde_json::Value> = results
        .iter()
        .map(|(name, res)| (name.clone(), res.value.to_natural_json()))
        .collect();
    serde_json::Value::Object(object).to_string()
}

/// Brand-specific context injected into prompts and used by consistency
/// checks: tone, values, phrase lists, and free-form compliance rules
/// (time-zone conventions, gender inclusivity, date formatting, audience
/// norms).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrandContext {
    pub brand_id: String,
    #[serde(default)]
    pub tone_descriptors: Vec<String>,
    #[serde(default)]
    pub core_values: Vec<String>,
    #[serde(default)]
    pub positive_phrases: Vec<String>,
    #[serde(default)]
    pub negative_phrases: Vec<String>,
    #[serde(default)]
    pub compliance_rules: Vec<String>,
}

impl BrandContext {
    /// Positive and negative phrase lists must be disjoint after
    /// case-folding.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let positives: std::collections::BTreeSet<String> = self
            .positive_phrases
            .iter()
            .map(|p| p.to_lowercase())
            .collect();
        for phrase in &self.negative_phrases {
            if positives.contains(&phrase.to_lowercase()) {
                return Err(ValidationError::PhraseOverlap {
                    brand_id: self.brand_id.clone(),
                    phrase: phrase.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Validation failures for model output and loaded data. Missing
/// attributes, shape mismatches and unparseable payloads all signal a
/// retry-eligible malformed generation.
#[derive(Debug, Clone, Error, PartialEq, Serialize, Deserialize)]
pub enum ValidationError {
    #[error("missing attribute {0:?}")]
    MissingAttribute(String),
    #[error("attribute {attribute:?}: expected {expected} value")]
    TypeMismatch {
        attribute: String,
        expected: AttributeKind,
    },
    #[error("no parseable JSON object (around byte offset {offset})")]
    Unparseable { offset: usize },
    #[error("duplicate attribute name {0:?} in suite")]
    DuplicateAttribute(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("brand {brand_id:?}: phrase {phrase:?} is both positive and negative")]
    PhraseOverlap { brand_id: String, phrase: String },
    #[error("coordinate {name} = {value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
}

/// Extracts the outermost JSON object from model text that may fence it in
/// prose or a code block. Returns the parsed object and the byte offset of
/// the opening brace.
pub fn extract_json_object(raw: &str) -> Result<(serde_json::Value, usize), ValidationError> {
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(raw.trim()) {
        if value.is_object() {
            return Ok((value, 0));
        }
    }
    let start = raw.find('{').ok_or(ValidationError::Unparseable { offset: 0 })?;
    // Widest-first: from the last '}' backwards until a parse succeeds.
    let mut end = raw.rfind('}').ok_or(ValidationError::Unparseable { offset: start })?;
    loop {
        if end > start {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(&raw[start..=end]) {
                if value.is_object() {
                    return Ok((value, start));
                }
            }
        }
        match raw[..end].rfind('}') {
            Some(prev) => end = prev,
            None => return Err(ValidationError::Unparseable { offset: start }),
        }
    }
}

/// Validates raw model text against a suite: every attribute present,
/// every value shape correct.
pub fn validate_report(
    raw: &str,
    suite: &[AttributeSpec],
) -> Result<BTreeMap<String, AttributeResult>, ValidationError> {
    let (value, _) = extract_json_object(raw)?;
    let object = value.as_object().expect("extract_json_object returns objects");
    let mut results = BTreeMap::new();
    for spec in suite {
        let raw_value = object
            .get(&spec.name)
            .ok_or_else(|| ValidationError::MissingAttribute(spec.name.clone()))?;
        let parsed = AttributeValue::from_natural_json(raw_value, spec.kind).map_err(|_| {
            ValidationError::TypeMismatch {
                attribute: spec.name.clone(),
                expected: spec.kind,
            }
        })?;
        results.insert(
            spec.name.clone(),
            AttributeResult {
                value: parsed,
                raw_model_text: raw_value.to_string(),
            },
        );
    }
    Ok(results)
}

/// Checks that suite names are unique; returns the suite unchanged.
pub fn validate_suite(suite: Vec<AttributeSpec>) -> Result<Vec<AttributeSpec>, ValidationError> {
    let mut seen = std::collections::BTreeSet::new();
    for spec in &suite {
        if !seen.insert(spec.name.clone()) {
            return Err(ValidationError::DuplicateAttribute(spec.name.clone()));
        }
    }
    Ok(suite)
}

/// Half-span of the center bin along each axis. The center region is the
/// middle 50% x 50% rectangle of the canvas; configurable because the five
/// bins have no canonical geometry.
pub const CENTER_HALF_SPAN: f64 = 0.25;

/// Bins a normalized element center into one of the five position sectors.
///
/// Coordinates are fractions of width/height with y measured downward from
/// the top. Center wins when both axes are within [`CENTER_HALF_SPAN`] of
/// the midpoint; otherwise the quadrant decides, with exact-midpoint ties
/// resolved toward Top and Left.
pub fn position_bin(center_x: f64, center_y: f64) -> Result<PositionSector, ValidationError> {
    for (name, value) in [("center_x", center_x), ("center_y", center_y)] {
        if !(0.0..=1.0).contains(&value) || value.is_nan() {
            return Err(ValidationError::OutOfRange { name, value });
        }
    }
    if (center_x - 0.5).abs() <= CENTER_HALF_SPAN && (center_y - 0.5).abs() <= CENTER_HALF_SPAN {
        return Ok(PositionSector::Center);
    }
    let right = center_x > 0.5;
    let bottom = center_y > 0.5;
    Ok(match (right, bottom) {
        (false, false) => PositionSector::TopLeft,
        (true, false) => PositionSector::TopRight,
        (false, true) => PositionSector::BottomLeft,
        (true, true) => PositionSector::BottomRight,
    })
}

/// Bundled placeholder list of representative call-to-action phrases.
pub fn default_cta_phrases() -> Vec<String> {
    lexicon_lines(include_str!("../data/cta_phrases.txt"))
}

/// Bundled placeholder list of representative urgency phrases.
pub fn default_urgent_phrases() -> Vec<String> {
    lexicon_lines(include_str!("../data/urgent_phrases.txt"))
}

pub(crate) fn lexicon_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn phrase_guidance(intro: &str, phrases: &[String]) -> String {
    format!("{} Representative (non-exhaustive) phrases: {}.", intro, phrases.join(", "))
}

/// The default 21-attribute compliance suite. Names are the literal keys
/// the child prompt demands in its JSON answer.
pub fn default_attribute_suite() -> Vec<AttributeSpec> {
    use AttributeKind::*;
    let cta = default_cta_phrases();
    let urgent = default_urgent_phrases();
    vec![
        AttributeSpec::new(
            "Primary Color",
            ColorList,
            "The up-to-three dominant colors of the creative, most prominent first.",
        ),
        AttributeSpec::new(
            "Logo Detection",
            Boolean,
            "Whether the brand's logo appears anywhere in the creative.",
        ),
        AttributeSpec::new(
            "Logo Position",
            PositionSector,
            "Which of the five sectors (Center, Top-Left, Top-Right, Bottom-Left, Bottom-Right) contains the logo.",
        ),
        AttributeSpec::new(
            "Human Presence",
            Boolean,
            "Whether any human figure is visible.",
        )
        .with_guidance("Count any visible body part that indicates a person.".to_string()),
        AttributeSpec::new("Face Detection", Boolean, "Whether a human face is visible.")
            .with_guidance(
                "Only real human faces count; caricatures and illustrated avatars do not."
                    .to_string(),
            ),
        AttributeSpec::new(
            "OCR Text",
            Text,
            "All text readable in the image, transcribed verbatim.",
        ),
        AttributeSpec::new(
            "OCR Overlay Text",
            Text,
            "Text overlaid on the imagery, transcribed verbatim.",
        )
        .with_guidance(
            "Report overlay text only when it occupies more than 10% of the image area."
                .to_string(),
        ),
        AttributeSpec::new(
            "Headline Text",
            Text,
            "The dominant textual element of the creative.",
        ),
        AttributeSpec::new(
            "CTA Presence",
            TextList,
            "Call-to-action phrases found in the creative, verbatim; empty when none.",
        )
        .with_guidance(phrase_guidance("Look for phrases inviting an action.", &cta)),
        AttributeSpec::new(
            "CTA Position",
            PositionSector,
            "Which of the five sectors contains the primary call-to-action.",
        ),
        AttributeSpec::new(
            "Language Detected",
            TextList,
            "Languages of the readable text, in English (e.g. English, Spanish).",
        ),
        AttributeSpec::new(
            "Urgent Claim",
            TextList,
            "Urgency phrases found in the creative, verbatim; empty when none.",
        )
        .with_guidance(phrase_guidance("Look for time pressure or scarcity wording.", &urgent)),
        AttributeSpec::new(
            "Profanity Detection",
            TextList,
            "Profane or inappropriate words found in the text; empty when none.",
        ),
        AttributeSpec::new(
            "Brand Tone Consistency",
            Suggestion,
            "A suggestion aligning the caption's tone with the brand's tone descriptors; empty when already aligned.",
        ),
        AttributeSpec::new(
            "Brand Value Consistency",
            Suggestion,
            "A suggestion aligning the caption with the brand's core values; empty when already aligned.",
        ),
        AttributeSpec::new(
            "Brand Positive Phrases",
            Suggestion,
            "A rewrite suggestion that reflects at least one of the brand's positive phrases.",
        ),
        AttributeSpec::new(
            "Brand Negative Phrases",
            Suggestion,
            "A rewrite suggestion that removes every brand-negative term found; empty when none are present.",
        ),
        AttributeSpec::new(
            "Grammar Check",
            Boolean,
            "Whether all readable text is grammatically correct.",
        ),
        AttributeSpec::new(
            "Compliance Check",
            Boolean,
            "Whether the creative meets the brand's content guidelines and rules.",
        ),
        AttributeSpec::new(
            "Compliance Consistency",
            Suggestion,
            "Concrete modifications needed for full compliance (time zones, inclusivity, date formats, audience norms); empty when none.",
        ),
        AttributeSpec::new("Emoji Detection", Boolean, "Whether any emoji appears in the creative."),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_suite() -> Vec<AttributeSpec> {
        vec![
            AttributeSpec::new("Logo Detection", AttributeKind::Boolean, "logo presence"),
            AttributeSpec::new("Logo Position", AttributeKind::PositionSector, "logo sector"),
            AttributeSpec::new("Primary Color", AttributeKind::ColorList, "colors"),
            AttributeSpec::new("OCR Text", AttributeKind::Text, "text"),
            AttributeSpec::new("CTA Presence", AttributeKind::TextList, "cta"),
        ]
    }

    #[test]
    fn default_suite_has_21_unique_names() {
        let suite = default_attribute_suite();
        assert_eq!(suite.len(), 21);
        let names: std::collections::BTreeSet<_> = suite.iter().map(|s| s.name.clone()).collect();
        assert_eq!(names.len(), 21);
        assert!(validate_suite(suite).is_ok());
    }

    #[test]
    fn default_suite_kinds() {
        let suite = default_attribute_suite();
        let kind = |name: &str| suite.iter().find(|s| s.name == name).unwrap().kind;
        assert_eq!(kind("Logo Detection"), AttributeKind::Boolean);
        assert_eq!(kind("Logo Position"), AttributeKind::PositionSector);
        assert_eq!(kind("Primary Color"), AttributeKind::ColorList);
        assert_eq!(kind("Compliance Consistency"), AttributeKind::Suggestion);
        assert_eq!(kind("Profanity Detection"), AttributeKind::TextList);
        assert_eq!(kind("OCR Text"), AttributeKind::Text);
    }

    #[test]
    fn default_suite_is_deterministic() {
        assert_eq!(default_attribute_suite(), default_attribute_suite());
    }

    #[test]
    fn validate_report_round_trips() {
        let suite = mini_suite();
        let text = r#"{
            "Logo Detection": true,
            "Logo Position": "Top-Left",
            "Primary Color": ["Red", "WHITE"],
            "OCR Text": "SALE today",
            "CTA Presence": ["Shop Now"]
        }"#;
        let results = validate_report(text, &suite).unwrap();
        assert_eq!(
            results["Logo Position"].value,
            AttributeValue::Position(PositionSector::TopLeft)
        );
        // Colors are normalized to lowercase.
        assert_eq!(
            results["Primary Color"].value,
            AttributeValue::ColorList(vec!["red".into(), "white".into()])
        );
        // Values survive the round trip; after one canonicalizing hop the
        // whole result (raw snippets included) is a fixed point.
        let canonical = validate_report(&render_results_json(&results), &suite).unwrap();
        for (name, res) in &results {
            assert_eq!(canonical[name].value, res.value);
        }
        let again = validate_report(&render_results_json(&canonical), &suite).unwrap();
        assert_eq!(again, canonical);
    }

    #[test]
    fn validate_report_tolerates_fencing_and_nesting() {
        let suite = vec![AttributeSpec::new(
            "Logo Detection",
            AttributeKind::Boolean,
            "",
        )];
        let text = "Here is my answer:\n```json\n{\"Logo Detection\": {\"value\": \"True\"}}\n```\nDone.";
        let results = validate_report(text, &suite).unwrap();
        assert_eq!(results["Logo Detection"].value, AttributeValue::Boolean(true));
    }

    #[test]
    fn validate_report_missing_attribute() {
        let suite = mini_suite();
        let text = r#"{"Logo Detection": true}"#;
        match validate_report(text, &suite) {
            Err(ValidationError::MissingAttribute(name)) => assert_eq!(name, "Logo Position"),
            other => panic!("expected MissingAttribute, got {other:?}"),
        }
    }

    #[test]
    fn validate_report_type_mismatch() {
        let suite = vec![AttributeSpec::new(
            "Logo Detection",
            AttributeKind::Boolean,
            "",
        )];
        match validate_report(r#"{"Logo Detection": "maybe"}"#, &suite) {
            Err(ValidationError::TypeMismatch { attribute, expected }) => {
                assert_eq!(attribute, "Logo Detection");
                assert_eq!(expected, AttributeKind::Boolean);
            }
            other => panic!("expected TypeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn validate_report_rejects_four_colors() {
        let suite = vec![AttributeSpec::new("Primary Color", AttributeKind::ColorList, "")];
        let text = r#"{"Primary Color": ["a", "b", "c", "d"]}"#;
        assert!(matches!(
            validate_report(text, &suite),
            Err(ValidationError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn validate_report_unparseable() {
        let suite = mini_suite();
        assert!(matches!(
            validate_report("no json here at all", &suite),
            Err(ValidationError::Unparseable { .. })
        ));
    }

    #[test]
    fn position_bin_examples() {
        assert_eq!(position_bin(0.5, 0.5).unwrap(), PositionSector::Center);
        assert_eq!(position_bin(0.9, 0.1).unwrap(), PositionSector::TopRight);
        assert_eq!(position_bin(0.74, 0.5).unwrap(), PositionSector::Center);
        assert_eq!(position_bin(0.76, 0.5).unwrap(), PositionSector::TopRight);
        assert_eq!(position_bin(0.0, 1.0).unwrap(), PositionSector::BottomLeft);
    }

    #[test]
    fn position_bin_rejects_out_of_range() {
        assert!(position_bin(-0.01, 0.5).is_err());
        assert!(position_bin(0.5, 1.01).is_err());
        assert!(position_bin(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn position_bin_center_area_is_one_quarter() {
        // Midpoint grid avoids boundary ties, so the count is exact.
        let n = 200usize;
        let mut center = 0usize;
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 + 0.5) / n as f64;
                let y = (j as f64 + 0.5) / n as f64;
                if position_bin(x, y).unwrap() == PositionSector::Center {
                    center += 1;
                }
            }
        }
        assert_eq!(center, n * n / 4);
    }

    #[test]
    fn position_bin_reaches_all_five_sectors() {
        let mut seen = std::collections::BTreeSet::new();
        let n = 21usize;
        for i in 0..=n {
            for j in 0..=n {
                let sector = position_bin(i as f64 / n as f64, j as f64 / n as f64).unwrap();
                seen.insert(sector);
            }
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn brand_context_phrase_overlap() {
        let brand = BrandContext {
            brand_id: "b".into(),
            positive_phrases: vec!["Quality first".into()],
            negative_phrases: vec!["quality FIRST".into()],
            ..BrandContext::default()
        };
        assert!(matches!(
            brand.validate(),
            Err(ValidationError::PhraseOverlap { .. })
        ));
    }
}
