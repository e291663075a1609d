//! Deterministic mock backend driven by a fixture table.
//!
//! Fixtures key on a digest of (model id, prompt text, image bytes), so a
//! given prompt always resolves to the same canned response. Entries can
//! script a number of leading transport failures to exercise retry paths.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, ModelSpec, PromptBundle, RawResponse, TokenUsage};

/// Lookup key for a canned response: SHA-256 over the model id, system
/// text, user text and image bytes, NUL-separated, hex-encoded.
pub fn prompt_digest(model_id: &str, prompt: &PromptBundle) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    hasher.update([0]);
    hasher.update(prompt.system.as_bytes());
    hasher.update([0]);
    hasher.update(prompt.user.as_bytes());
    hasher.update([0]);
    if let Some(image) = &prompt.image {
        hasher.update(&image.bytes);
    }
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One canned response.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub text: String,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    /// This many invocations fail with a transport error before the entry
    /// starts succeeding.
    #[serde(default)]
    pub scripted_failures: u32,
    /// Reported (not slept) latency, so cost/latency tests stay fast and
    /// deterministic.
    #[serde(default)]
    pub latency_seconds: f64,
}

/// Fixture file content: digest (or fallback key) -> entry.
///
/// Lookup order: exact digest, then `default:<model_id>`, then `default`.
/// The fallback keys let a small fixture file answer arbitrary prompts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockFixtures {
    pub entries: BTreeMap<String, FixtureEntry>,
}

impl MockFixtures {
    pub fn load(path: &std::path::Path) -> std::io::Result<MockFixtures> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self).expect("fixtures serialize"))
    }

    /// Registers a canned response for the exact (model, prompt) pair.
    pub fn insert_for(&mut self, model_id: &str, prompt: &PromptBundle, entry: FixtureEntry) {
        self.entries.insert(prompt_digest(model_id, prompt), entry);
    }
}

/// Fixture-backed backend. Immutable canned data; the only mutable state
/// is the per-digest countdown of scripted failures and a call counter.
pub struct MockBackend {
    fixtures: MockFixtures,
    remaining_failures: Mutex<BTreeMap<String, u32>>,
    invocations: AtomicU64,
}

impl MockBackend {
    pub fn new(fixtures: MockFixtures) -> Self {
        let remaining = fixtures
            .entries
            .iter()
            .filter(|(_, e)| e.scripted_failures > 0)
            .map(|(k, e)| (k.clone(), e.scripted_failures))
            .collect();
        Self {
            fixtures,
            remaining_failures: Mutex::new(remaining),
            invocations: AtomicU64::new(0),
        }
    }

    /// Total invocations since construction, successful or not.
    pub fn invocation_count(&self) -> u64 {
        self.invocations.load(Ordering::SeqCst)
    }

    pub fn invoke(&self, spec: &ModelSpec, prompt: &PromptBundle) -> Result<RawResponse, BackendError> {
        self.invocations.fetch_add(1, Ordering::SeqCst);
        let digest = prompt_digest(&spec.model_id, prompt);
        let (key, entry) = self
            .lookup(&digest, &spec.model_id)
            .ok_or_else(|| BackendError::Transport(format!("no mock fixture for digest {digest}")))?;
        {
            let mut remaining = self.remaining_failures.lock().unwrap();
            let counter = remaining.entry(key).or_insert(entry.scripted_failures);
            if *counter > 0 {
                *counter -= 1;
                return Err(BackendError::Transport("scripted failure".to_string()));
            }
        }
        if entry.text.is_empty() {
            return Err(BackendError::EmptyResponse);
        }
        Ok(RawResponse {
            text: entry.text.clone(),
            usage: TokenUsage::new(entry.input_tokens, entry.output_tokens),
            latency_seconds: entry.latency_seconds,
            attempt_count: 1,
        })
    }

    fn lookup(&self, digest: &str, model_id: &str) -> Option<(String, FixtureEntry)> {
        for key in [digest, &format!("default:{model_id}"), "default"] {
            if let Some(entry) = self.fixtures.entries.get(key) {
                return Some((key.to_string(), entry.clone()));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_depends_on_every_component() {
        let base = PromptBundle::text_only("s", "u");
        let d0 = prompt_digest("m", &base);
        assert_ne!(d0, prompt_digest("other", &base));
        assert_ne!(d0, prompt_digest("m", &PromptBundle::text_only("s2", "u")));
        assert_ne!(d0, prompt_digest("m", &PromptBundle::text_only("s", "u2")));
        let with_image = base.clone().with_image(super::super::ImagePayload {
            mime: "image/png".into(),
            bytes: vec![1, 2, 3],
        });
        assert_ne!(d0, prompt_digest("m", &with_image));
    }

    #[test]
    fn fallback_lookup_order() {
        let mut fixtures = MockFixtures::default();
        fixtures.entries.insert(
            "default".into(),
            FixtureEntry { text: "generic".into(), ..FixtureEntry::default() },
        );
        fixtures.entries.insert(
            "default:special".into(),
            FixtureEntry { text: "per-model".into(), ..FixtureEntry::default() },
        );
        let backend = MockBackend::new(fixtures);
        let prompt = PromptBundle::text_only("s", "u");
        let generic = backend.invoke(&ModelSpec::mock("m"), &prompt).unwrap();
        assert_eq!(generic.text, "generic");
        let special = backend.invoke(&ModelSpec::mock("special"), &prompt).unwrap();
        assert_eq!(special.text, "per-model");
    }

    #[test]
    fn missing_fixture_is_a_transport_error() {
        let backend = MockBackend::new(MockFixtures::default());
        let err = backend
            .invoke(&ModelSpec::mock("m"), &PromptBundle::text_only("s", "u"))
            .unwrap_err();
        assert!(matches!(err, BackendError::Transport(_)));
    }

    #[test]
    fn empty_text_is_an_empty_response() {
        let mut fixtures = MockFixtures::default();
        fixtures.entries.insert("default".into(), FixtureEntry::default());
        let backend = MockBackend::new(fixtures);
        let err = backend
            .invoke(&ModelSpec::mock("m"), &PromptBundle::text_only("s", "u"))
            .unwrap_err();
        assert!(matches!(err, BackendError::EmptyResponse));
    }

    #[test]
    fn fixture_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.json");
        let mut fixtures = MockFixtures::default();
        fixtures.insert_for(
            "m",
            &PromptBundle::text_only("s", "u"),
            FixtureEntry { text: "t".into(), input_tokens: 5, output_tokens: 7, ..FixtureEntry::default() },
        );
        fixtures.save(&path).unwrap();
        let loaded = MockFixtures::load(&path).unwrap();
        assert_eq!(loaded.entries, fixtures.entries);
    }
}
