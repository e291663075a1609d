//! Dataset ingestion, annotation loading, and append-only persistence of
//! runs, reports, verdicts, and metrics.
//!
//! Everything persists as JSON lines under a per-run directory with fixed
//! file names, so golden-file comparisons and cross-language readers stay
//! trivial. Every record carries the run id and a schema version.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Creative, EvaluationRun, Outcome};
use crate::judge::JudgedVerdict;
use crate::schema::{AttributeSpec, AttributeValue, BrandContext, ValidationError};

pub const SCHEMA_VERSION: u32 = 1;

const HEADER_FILE: &str = "header.json";
const REPORTS_FILE: &str = "reports.jsonl";
const VERDICTS_FILE: &str = "verdicts.jsonl";
const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("duplicate creative id {0:?}")]
    DuplicateId(String),
    #[error("missing image {0}")]
    MissingImage(String),
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("annotation for unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("annotation value for {attribute:?} does not fit kind: {value}")]
    TypeMismatch { attribute: String, value: serde_json::Value },
    #[error("annotation file mixes annotator ids {0:?} and {1:?}")]
    MixedAnnotators(String, String),
    #[error("run {0:?} not found")]
    NotFound(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io { path: path.display().to_string(), source }
}

/// One human annotator's labels, keyed by (creative_id, attribute).
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub annotator_id: String,
    pub labels: BTreeMap<(String, String), AttributeValue>,
}

impl AnnotationSet {
    pub fn get(&self, creative_id: &str, attribute: &str) -> Option<&AttributeValue> {
        self.labels.get(&(creative_id.to_string(), attribute.to_string()))
    }

    /// Attribute names with at least one label.
    pub fn attributes(&self) -> Vec<String> {
        let mut names: Vec<String> =
            self.labels.keys().map(|(_, attr)| attr.clone()).collect();
        names.sort();
        names.dedup();
        names
    }
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    creative_id: String,
    image_path: String,
    #[serde(default)]
    caption: Option<String>,
    brand_id: String,
}

/// Loads a dataset manifest (JSON lines). Image paths resolve relative to
/// the manifest's directory; ids must be unique and images present.
pub fn load_dataset(manifest: &Path) -> Result<Vec<Creative>, StoreError> {
    let rows: Vec<ManifestRow> = read_jsonl_strict(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut seen = std::collections::BTreeSet::new();
    let mut creatives = Vec::with_capacity(rows.len());
    for row in rows {
        if !seen.insert(row.creative_id.clone()) {
            return Err(StoreError::DuplicateId(row.creative_id));
        }
        let image_path = base.join(&row.image_path);
        if !image_path.is_file() {
            return Err(StoreError::MissingImage(image_path.display().to_string()));
        }
        creatives.push(Creative {
            creative_id: row.creative_id,
            image_path,
            caption: row.caption,
            brand_id: row.brand_id,
        });
    }
    Ok(creatives)
}

#[derive(Debug, Deserialize)]
struct AnnotationRow {
    annotator_id: String,
    creative_id: String,
    attribute: String,
    value: serde_json::Value,
}

/// Loads one annotator's labels (JSON lines), validating every value
/// against the suite's kinds. A file must contain a single annotator.
pub fn load_annotations(path: &Path, suite: &[AttributeSpec]) -> Result<AnnotationSet, StoreError> {
    let rows: Vec<AnnotationRow> = read_jsonl_strict(path)?;
    let by_name: BTreeMap<&str, &AttributeSpec> =
        suite.iter().map(|s| (s.name.as_str(), s)).collect();
    let mut annotator_id: Option<String> = None;
    let mut labels = BTreeMap::new();
    for row in rows {
        match &annotator_id {
            None => annotator_id = Some(row.annotator_id.clone()),
            Some(existing) if *existing != row.annotator_id => {
                return Err(StoreError::MixedAnnotators(existing.clone(), row.annotator_id))
            }
            Some(_) => {}
        }
        let spec = by_name
            .get(row.attribute.as_str())
            .ok_or_else(|| StoreError::UnknownAttribute(row.attribute.clone()))?;
        let value = AttributeValue::from_natural_json(&row.value, spec.kind).map_err(|_| {
            StoreError::TypeMismatch { attribute: row.attribute.clone(), value: row.value.clone() }
        })?;
        labels.insert((row.creative_id, row.attribute), value);
    }
    Ok(AnnotationSet { annotator_id: annotator_id.unwrap_or_default(), labels })
}

/// Loads brand contexts from a JSON array, keyed by brand id, validating
/// phrase-list disjointness.
pub fn load_brand_contexts(path: &Path) -> Result<BTreeMap<String, BrandContext>, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let brands: Vec<BrandContext> = serde_json::from_str(&text).map_err(|e| {
        StoreError::Malformed { path: path.display().to_string(), line: 0, message: e.to_string() }
    })?;
    let mut map = BTreeMap::new();
    for brand in brands {
        brand.validate()?;
        map.insert(brand.brand_id.clone(), brand);
    }
    Ok(map)
}

/// Loads an attribute suite from a JSON array, enforcing name uniqueness.
pub fn load_suite_file(path: &Path) -> Result<Vec<AttributeSpec>, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let suite: Vec<AttributeSpec> = serde_json::from_str(&text).map_err(|e| {
        StoreError::Malformed { path: path.display().to_string(), line: 0, message: e.to_string() }
    })?;
    Ok(crate::schema::validate_suite(suite)?)
}

/// Run header persisted as `header.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub run_id: String,
    pub dataset_ref: String,
    pub model_ids: Vec<String>,
    pub suite: Vec<AttributeSpec>,
    pub prompt_version: u32,
    pub prompt_hash: String,
    pub started: u64,
    pub finished: u64,
}

/// One line of `reports.jsonl`: a (creative, model) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub creative_id: String,
    pub model_id: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

/// One line of `verdicts.jsonl`: a judged attribute keyed by
/// (run, creative, child model, attribute).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub creative_id: String,
    pub child_model_id: String,
    pub mother_model_id: String,
    pub attribute: String,
    pub verdict: JudgedVerdict,
}

/// Append-only archive of runs under a root directory; one subdirectory
/// per run id with fixed file names.
#[derive(Debug, Clone)]
pub struct RunArchive {
    root: PathBuf,
}

impl RunArchive {
    pub fn open(root: &Path) -> Result<RunArchive, StoreError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(RunArchive { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    /// Persists header and outcomes of a completed run. Outcomes append in
    /// key order, so re-running with identical inputs reproduces the
    /// segment byte for byte.
    pub fn write_run(&self, run: &EvaluationRun) -> Result<(), StoreError> {
        let dir = self.run_dir(&run.run_id);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let header = RunHeader {
            schema_version: SCHEMA_VERSION,
            run_id: run.run_id.clone(),
            dataset_ref: run.dataset_ref.clone(),
            model_ids: run.model_ids.clone(),
            suite: run.suite.clone(),
            prompt_version: run.prompt_version,
            prompt_hash: run.prompt_hash.clone(),
            started: run.started,
            finished: run.finished,
        };
        let header_path = dir.join(HEADER_FILE);
        std::fs::write(&header_path, serde_json::to_string_pretty(&header).expect("header"))
            .map_err(|e| io_err(&header_path, e))?;
        let reports_path = dir.join(REPORTS_FILE);
        for ((creative_id, model_id), outcome) in &run.outcomes {
            let record = ReportRecord {
                schema_version: SCHEMA_VERSION,
                run_id: run.run_id.clone(),
                creative_id: creative_id.clone(),
                model_id: model_id.clone(),
                outcome: outcome.clone(),
            };
            append_record(&reports_path, &record)?;
        }
        Ok(())
    }

    pub fn append_verdicts(&self, run_id: &str, records: &[VerdictRecord]) -> Result<(), StoreError> {
        let dir = self.run_dir(run_id);
        if !dir.is_dir() {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        let path = dir.join(VERDICTS_FILE);
        for record in records {
            append_record(&path, record)?;
        }
        Ok(())
    }

    /// Reads a run back: header, outcomes, verdicts, plus warnings for any
    /// lines skipped as corrupt.
    pub fn read_run(
        &self,
        run_id: &str,
    ) -> Result<(EvaluationRun, Vec<VerdictRecord>, Vec<String>), StoreError> {
        let dir = self.run_dir(run_id);
        let header_path = dir.join(HEADER_FILE);
        if !header_path.is_file() {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        let header_text =
            std::fs::read_to_string(&header_path).map_err(|e| io_err(&header_path, e))?;
        let header: RunHeader = serde_json::from_str(&header_text).map_err(|e| {
            StoreError::Malformed {
                path: header_path.display().to_string(),
                line: 0,
                message: e.to_string(),
            }
        })?;
        let mut warnings = Vec::new();
        let reports: Vec<ReportRecord> =
            read_jsonl_lossy(&dir.join(REPORTS_FILE), &mut warnings)?;
        let verdicts: Vec<VerdictRecord> =
            read_jsonl_lossy(&dir.join(VERDICTS_FILE), &mut warnings)?;
        let mut outcomes = BTreeMap::new();
        for record in reports {
            outcomes.insert((record.creative_id, record.model_id), record.outcome);
        }
        let run = EvaluationRun {
            run_id: header.run_id,
            dataset_ref: header.dataset_ref,
            model_ids: header.model_ids,
            suite: header.suite,
            prompt_version: header.prompt_version,
            prompt_hash: header.prompt_hash,
            started: header.started,
            finished: header.finished,
            outcomes,
        };
        Ok((run, verdicts, warnings))
    }

    /// Merges one named section into `metrics.json` (sections sorted, file
    /// rewritten atomically).
    pub fn update_metrics(
        &self,
        run_id: &str,
        section: &str,
        value: serde_json::Value,
    ) -> Result<(), StoreError> {
        let dir = self.run_dir(run_id);
        if !dir.is_dir() {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        let path = dir.join(METRICS_FILE);
        let mut doc = if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(&text)
                .unwrap_or_default()
        } else {
            serde_json::Map::new()
        };
        doc.insert("schema_version".to_string(), serde_json::json!(SCHEMA_VERSION));
        doc.insert("run_id".to_string(), serde_json::json!(run_id));
        doc.insert(section.to_string(), value);
        let sorted: BTreeMap<String, serde_json::Value> = doc.into_iter().collect();
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(&sorted).expect("metrics doc"))
            .map_err(|e| io_err(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        Ok(())
    }

    pub fn read_metrics(&self, run_id: &str) -> Result<serde_json::Value, StoreError> {
        let path = self.run_dir(run_id).join(METRICS_FILE);
        if !path.is_file() {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Malformed {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }
}

fn append_record<T: Serialize>(path: &Path, record: &T) -> Result<(), StoreError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut line = serde_json::to_string(record).expect("record serializes");
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
    file.flush().map_err(|e| io_err(path, e))
}

/// Strict JSONL reader: any bad line is an error.
fn read_jsonl_strict<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|e| StoreError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Lossy JSONL reader for archive segments: corrupt lines (e.g. a
/// truncated tail) are skipped with a warning, never aborting the read.
fn read_jsonl_lossy<T: DeserializeOwned>(
    path: &Path,
    warnings: &mut Vec<String>,
) -> Result<Vec<T>, StoreError> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(row) => rows.push(row),
            Err(e) => warnings.push(format!(
                "{}:{}: skipped corrupt record: {e}",
                path.display(),
                idx + 1
            )),
        }
    }
    Ok(rows)
}
