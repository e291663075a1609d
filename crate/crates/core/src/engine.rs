//! Child-model orchestration: prompt construction, single-creative
//! evaluation, and the parallel batch runner.
//!
//! A batch fans every (creative, model) pair out to the backends under a
//! work queue; failures are recorded, never aborting the run, and the
//! outcome map is a pure function of inputs and seeds regardless of
//! parallelism.

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{
    retrying_invoke, BackendRouter, Exhausted, ImagePayload, ModelSpec, PromptBundle, RetryPolicy,
};
use crate::schema::{validate_report, AttributeSpec, BrandContext, ComplianceReport};

/// Bumped whenever the child prompt wording changes, so archived runs can
/// be compared for prompt drift.
pub const PROMPT_VERSION: u32 = 1;

/// One advertisement asset under evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Creative {
    pub creative_id: String,
    pub image_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    pub brand_id: String,
}

/// Timestamp source. Mock pipelines use a fixed clock so archives are
/// byte-reproducible; live runs use wall time.
#[derive(Debug, Clone, Copy)]
pub enum Clock {
    Wall,
    Fixed(u64),
}

impl Clock {
    pub fn now(&self) -> u64 {
        match self {
            Clock::Wall => std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            Clock::Fixed(t) => *t,
        }
    }

    /// A deterministic clock derived from the run id.
    pub fn fixed_for_run(run_id: &str) -> Clock {
        let digest = Sha256::digest(run_id.as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        // Keep the value in a plausible epoch range.
        Clock::Fixed(u64::from_be_bytes(bytes) % 4_000_000_000)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("cannot load image {path}: {reason}")]
    ImageLoad { path: String, reason: String },
    #[error("no brand context for {0:?}")]
    UnknownBrand(String),
    #[error(transparent)]
    Exhausted(#[from] Exhausted),
    #[error("attribute suite is empty")]
    EmptySuite,
}

impl EngineError {
    /// Stable label used when the error is recorded in an outcome map.
    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::ImageLoad { .. } => "image_load",
            EngineError::UnknownBrand(_) => "unknown_brand",
            EngineError::Exhausted(_) => "exhausted",
            EngineError::EmptySuite => "empty_suite",
        }
    }
}

/// Builds the system/user prompt enumerating every suite attribute with
/// its description and guidance plus the brand context sections. The JSON
/// keys demanded of the model are exactly the suite attribute names.
pub fn build_child_prompt(suite: &[AttributeSpec], brand: &BrandContext) -> PromptBundle {
    let system = "You are a brand compliance and content safety expert. Reason carefully \
                  about the supplied image before answering. VERY IMPORTANT: output the \
                  result as a single JSON object with exactly the keys listed in the user \
                  prompt and no others."
        .to_string();

    let mut user = String::new();
    user.push_str(
        "Evaluate the attached advertisement creative for brand alignment and public \
         appropriateness. Answer every check below, then return one JSON object whose keys \
         are exactly the quoted attribute names.\n\nChecks:\n",
    );
    for spec in suite {
        user.push_str(&format!(
            "- \"{}\" ({}): {}",
            spec.name,
            expected_shape(spec),
            spec.description
        ));
        if let Some(guidance) = &spec.guidance {
            user.push_str(&format!(" {guidance}"));
        }
        user.push('\n');
    }
    let mut section = |title: &str, items: &[String]| {
        if !items.is_empty() {
            user.push_str(&format!("\n{title}:\n"));
            for item in items {
                user.push_str(&format!("- {item}\n"));
            }
        }
    };
    section("Brand tone descriptors", &brand.tone_descriptors);
    section("Brand core values", &brand.core_values);
    section("Brand positive phrases", &brand.positive_phrases);
    section("Brand negative phrases", &brand.negative_phrases);
    section("Brand compliance rules", &brand.compliance_rules);

    PromptBundle { system, user, image: None }
}

fn expected_shape(spec: &AttributeSpec) -> &'static str {
    use crate::schema::AttributeKind::*;
    match spec.kind {
        Boolean => "true or false",
        PositionSector => "one of Center, Top-Left, Top-Right, Bottom-Left, Bottom-Right",
        Text => "a string",
        TextList => "a list of strings",
        ColorList => "a list of at most 3 color names",
        Suggestion => "a suggestion string, empty if none needed",
    }
}

/// Hash of the suite-determined prompt template (blank brand, no caption),
/// recorded in run headers to expose prompt drift between runs.
pub fn prompt_template_hash(suite: &[AttributeSpec]) -> String {
    let blank = BrandContext::default();
    let bundle = build_child_prompt(suite, &blank);
    let mut hasher = Sha256::new();
    hasher.update(bundle.system.as_bytes());
    hasher.update([0]);
    hasher.update(bundle.user.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads and sniffs the creative's image, producing the transport payload.
pub fn load_image_payload(creative: &Creative) -> Result<ImagePayload, EngineError> {
    let bytes = std::fs::read(&creative.image_path).map_err(|e| EngineError::ImageLoad {
        path: creative.image_path.display().to_string(),
        reason: e.to_string(),
    })?;
    let format = image::guess_format(&bytes).map_err(|e| EngineError::ImageLoad {
        path: creative.image_path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mime = match format {
        image::ImageFormat::Png => "image/png",
        image::ImageFormat::Jpeg => "image/jpeg",
        other => {
            return Err(EngineError::ImageLoad {
                path: creative.image_path.display().to_string(),
                reason: format!("unsupported format {other:?}"),
            })
        }
    };
    Ok(ImagePayload { mime: mime.to_string(), bytes })
}

/// Builds the exact prompt a creative is evaluated with (caption appended
/// when present, image attached).
pub fn creative_prompt(
    creative: &Creative,
    suite: &[AttributeSpec],
    brand: &BrandContext,
) -> Result<PromptBundle, EngineError> {
    let image = load_image_payload(creative)?;
    let mut prompt = build_child_prompt(suite, brand);
    if let Some(caption) = &creative.caption {
        prompt.user.push_str(&format!("\nCaption: {caption}\n"));
    }
    Ok(prompt.with_image(image))
}

/// Evaluates one creative with one model: a single logical request (plus
/// retries) whose output must validate against the full suite.
pub fn evaluate_creative(
    router: &BackendRouter,
    spec: &ModelSpec,
    creative: &Creative,
    suite: &[AttributeSpec],
    brand: &BrandContext,
    policy: &RetryPolicy,
    clock: Clock,
) -> Result<ComplianceReport, EngineError> {
    if suite.is_empty() {
        return Err(EngineError::EmptySuite);
    }
    let prompt = creative_prompt(creative, suite, brand)?;
    let (response, results) = retrying_invoke(router, spec, &prompt, policy, |raw| {
        validate_report(&raw.text, suite)
    })?;
    Ok(ComplianceReport {
        creative_id: creative.creative_id.clone(),
        model_id: spec.model_id.clone(),
        results,
        usage: response.usage,
        latency_seconds: response.latency_seconds,
        timestamp: clock.now(),
    })
}

/// Terminal result for one (creative, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Ok { report: ComplianceReport },
    Failed { kind: String, message: String },
}

impl Outcome {
    pub fn report(&self) -> Option<&ComplianceReport> {
        match self {
            Outcome::Ok { report } => Some(report),
            Outcome::Failed { .. } => None,
        }
    }
}

/// A completed batch: every (creative, model) pair attempted exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRun {
    pub run_id: String,
    pub dataset_ref: String,
    pub model_ids: Vec<String>,
    pub suite: Vec<AttributeSpec>,
    pub prompt_version: u32,
    pub prompt_hash: String,
    pub started: u64,
    pub finished: u64,
    /// Keyed by (creative_id, model_id).
    pub outcomes: BTreeMap<(String, String), Outcome>,
}

impl EvaluationRun {
    pub fn reports(&self) -> impl Iterator<Item = &ComplianceReport> {
        self.outcomes.values().filter_map(Outcome::report)
    }

    pub fn failure_count(&self) -> usize {
        self.outcomes.len() - self.outcomes.values().filter(|o| o.report().is_some()).count()
    }
}

/// Runs the full cartesian product of creatives and models with the given
/// worker parallelism. Failures become `Outcome::Failed` entries; the
/// result map is independent of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    router: &BackendRouter,
    dataset: &[Creative],
    specs: &[ModelSpec],
    suite: &[AttributeSpec],
    brands: &BTreeMap<String, BrandContext>,
    policy: &RetryPolicy,
    parallelism: usize,
    run_id: &str,
    dataset_ref: &str,
    clock: Clock,
) -> EvaluationRun {
    let started = clock.now();
    let tasks: VecDeque<(usize, usize)> = (0..dataset.len())
        .flat_map(|c| (0..specs.len()).map(move |m| (c, m)))
        .collect();
    let queue = Mutex::new(tasks);
    let outcomes = Mutex::new(BTreeMap::new());
    let workers = parallelism.max(1).min((dataset.len() * specs.len()).max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let task = queue.lock().unwrap().pop_front();
                let Some((ci, mi)) = task else { break };
                let creative = &dataset[ci];
                let spec = &specs[mi];
                let outcome = match brands.get(&creative.brand_id) {
                    None => err_outcome(&EngineError::UnknownBrand(creative.brand_id.clone())),
                    Some(brand) => {
                        match evaluate_creative(router, spec, creative, suite, brand, policy, clock)
                        {
                            Ok(report) => Outcome::Ok { report },
                            Err(e) => err_outcome(&e),
                        }
                    }
                };
                outcomes
                    .lock()
                    .unwrap()
                    .insert((creative.creative_id.clone(), spec.model_id.clone()), outcome);
            });
        }
    });

    EvaluationRun {
        run_id: run_id.to_string(),
        dataset_ref: dataset_ref.to_string(),
        model_ids: specs.iter().map(|s| s.model_id.clone()).collect(),
        suite: suite.to_vec(),
        prompt_version: PROMPT_VERSION,
        prompt_hash: prompt_template_hash(suite),
        started,
        finished: clock.now(),
        outcomes: outcomes.into_inner().unwrap(),
    }
}

fn err_outcome(e: &EngineError) -> Outcome {
    Outcome::Failed { kind: e.kind().to_string(), message: e.to_string() }
}
