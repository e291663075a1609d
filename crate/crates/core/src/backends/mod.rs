//! Pluggable model invocation: live HTTP providers and a deterministic
//! mock, with usage and latency capture.
//!
//! One request, one response — no streaming. Nothing in this module
//! interprets response content; parsing and judging live elsewhere.

pub mod http;
pub mod mock;

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::rng::splitmix64;

/// Which wire protocol a model speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    OpenAiStyle,
    GeminiStyle,
    Mock,
}

/// Output-token ceiling for a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxTokens {
    /// Ask for the highest value the provider supports (the field is
    /// omitted from the request).
    ProviderMax,
    Explicit(u32),
}

impl Default for MaxTokens {
    fn default() -> Self {
        MaxTokens::ProviderMax
    }
}

fn default_temperature() -> f64 {
    0.0001
}

fn default_seed() -> u64 {
    42
}

/// Registry entry for one model: identity, pricing, and the deterministic
/// invocation settings every request carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub provider: Provider,
    /// USD per 1M input tokens.
    pub input_rate: f64,
    /// USD per 1M output tokens.
    pub output_rate: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub max_output_tokens: MaxTokens,
    #[serde(default)]
    pub reasoning_enabled: bool,
}

impl ModelSpec {
    pub fn new(model_id: &str, provider: Provider, input_rate: f64, output_rate: f64) -> Self {
        Self {
            model_id: model_id.to_string(),
            provider,
            input_rate,
            output_rate,
            temperature: default_temperature(),
            seed: default_seed(),
            max_output_tokens: MaxTokens::ProviderMax,
            reasoning_enabled: false,
        }
    }

    /// A zero-cost mock entry for tests and offline pipelines.
    pub fn mock(model_id: &str) -> Self {
        ModelSpec::new(model_id, Provider::Mock, 0.0, 0.0)
    }
}

/// The default registry of evaluated models with their published USD
/// per-1M-token rates.
pub fn default_registry() -> Vec<ModelSpec> {
    let mut specs = vec![
        ModelSpec::new("gpt-4.1", Provider::OpenAiStyle, 2.00, 8.00),
        ModelSpec::new("gpt-4.1-mini", Provider::OpenAiStyle, 0.40, 1.60),
        ModelSpec::new("gpt-4o", Provider::OpenAiStyle, 2.50, 10.00),
        ModelSpec::new("gpt-4o-mini", Provider::OpenAiStyle, 0.15, 0.60),
        ModelSpec::new("gemini-2.5-pro", Provider::GeminiStyle, 1.25, 10.00),
        ModelSpec::new("gemini-2.5-flash", Provider::GeminiStyle, 0.30, 2.50),
        ModelSpec::new("gemini-2.0-flash", Provider::GeminiStyle, 0.15, 3.00),
        ModelSpec::new("gemini-1.5-pro", Provider::GeminiStyle, 1.25, 5.00),
    ];
    for spec in &mut specs {
        // The 2.5-series ships with reasoning on by default; the latency it
        // adds is part of what cost accounting must show.
        spec.reasoning_enabled = spec.model_id.starts_with("gemini-2.5");
    }
    specs
}

/// Provider-reported token counts for one call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self { input_tokens, output_tokens }
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

/// Image attachment for a prompt: encoded bytes plus their MIME type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePayload {
    pub mime: String,
    pub bytes: Vec<u8>,
}

/// One prompt: system text, user text, optional image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub image: Option<ImagePayload>,
}

impl PromptBundle {
    pub fn text_only(system: &str, user: &str) -> Self {
        Self { system: system.to_string(), user: user.to_string(), image: None }
    }

    pub fn with_image(mut self, image: ImagePayload) -> Self {
        self.image = Some(image);
        self
    }
}

/// Verbatim provider output plus measured latency and reported usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_seconds: f64,
    /// Total invocations made for the logical call this response finished.
    pub attempt_count: u32,
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Network-level or HTTP >= 500 failure; retry-eligible.
    #[error("transport error: {0}")]
    Transport(String),
    /// Credential problem; fatal.
    #[error("auth error: {0}")]
    Auth(String),
    /// HTTP 429; retry after the given hint when present.
    #[error("rate limited (retry after {retry_after:?}s)")]
    RateLimited { retry_after: Option<f64> },
    /// The provider returned no usable text; retry-eligible.
    #[error("empty response")]
    EmptyResponse,
}

impl BackendError {
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::Auth(_))
    }
}

/// Retry budget and backoff base for [`retrying_invoke`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Seconds; the attempt-n delay is uniform in
    /// `[0, base_backoff * 2^(n-1)]` (full jitter).
    pub base_backoff: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_backoff: 1.0 }
    }
}

/// Terminal failure after the retry budget is spent.
#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("exhausted after {attempts} attempts: {last_error}")]
pub struct Exhausted {
    pub attempts: u32,
    pub last_error: String,
}

/// Counting semaphore keyed by model id; bounds in-flight requests per
/// model.
pub struct ConcurrencyLimiter {
    ceiling: usize,
    in_flight: Mutex<HashMap<String, usize>>,
    released: Condvar,
}

impl ConcurrencyLimiter {
    pub fn new(ceiling: usize) -> Self {
        Self {
            ceiling: ceiling.max(1),
            in_flight: Mutex::new(HashMap::new()),
            released: Condvar::new(),
        }
    }

    pub fn acquire(&self, model_id: &str) -> LimiterPermit<'_> {
        let mut counts = self.in_flight.lock().unwrap();
        loop {
            let current = counts.entry(model_id.to_string()).or_insert(0);
            if *current < self.ceiling {
                *current += 1;
                return LimiterPermit { limiter: self, model_id: model_id.to_string() };
            }
            counts = self.released.wait(counts).unwrap();
        }
    }
}

pub struct LimiterPermit<'a> {
    limiter: &'a ConcurrencyLimiter,
    model_id: String,
}

impl Drop for LimiterPermit<'_> {
    fn drop(&mut self) {
        let mut counts = self.limiter.in_flight.lock().unwrap();
        if let Some(n) = counts.get_mut(&self.model_id) {
            *n = n.saturating_sub(1);
        }
        self.limiter.released.notify_all();
    }
}

/// Routes invocations to the right provider implementation under the
/// per-model concurrency limit.
pub struct BackendRouter {
    mock: Option<mock::MockBackend>,
    http: http::HttpBackends,
    limiter: ConcurrencyLimiter,
}

impl BackendRouter {
    pub fn new(mock_fixtures: Option<mock::MockFixtures>, concurrency_limit: usize) -> Self {
        Self {
            mock: mock_fixtures.map(mock::MockBackend::new),
            http: http::HttpBackends::from_env(),
            limiter: ConcurrencyLimiter::new(concurrency_limit),
        }
    }

    pub fn mock_only(fixtures: mock::MockFixtures) -> Self {
        Self::new(Some(fixtures), 4)
    }

    pub fn mock_backend(&self) -> Option<&mock::MockBackend> {
        self.mock.as_ref()
    }

    /// One provider call, wall-clock timed, bounded by the per-model
    /// limiter. The response text is returned verbatim.
    pub fn invoke(&self, spec: &ModelSpec, prompt: &PromptBundle) -> Result<RawResponse, BackendError> {
        let _permit = self.limiter.acquire(&spec.model_id);
        let started = Instant::now();
        match spec.provider {
            Provider::Mock => {
                let backend = self.mock.as_ref().ok_or_else(|| {
                    BackendError::Transport("no mock fixtures configured".to_string())
                })?;
                backend.invoke(spec, prompt)
            }
            Provider::OpenAiStyle => self.http.invoke_openai(spec, prompt, started),
            Provider::GeminiStyle => self.http.invoke_gemini(spec, prompt, started),
        }
    }
}

/// Full-jitter delay for the given attempt, seeded deterministically.
fn backoff_delay(policy: &RetryPolicy, spec_seed: u64, attempt: u32) -> f64 {
    if policy.base_backoff <= 0.0 {
        return 0.0;
    }
    let span = policy.base_backoff * f64::from(1u32 << attempt.min(16));
    let fraction = splitmix64(spec_seed ^ (0xB0FF << 16) ^ u64::from(attempt)) as f64
        / u64::MAX as f64;
    span * fraction
}

/// Invokes with retries covering both transport failures and downstream
/// structural validation: `parse` inspects the raw text, and its failures
/// trigger re-invocation just like an unreachable host does.
///
/// Returns the final raw response (with `attempt_count` set to the total
/// invocations made) alongside the parsed value.
pub fn retrying_invoke<T, E: std::fmt::Display>(
    router: &BackendRouter,
    spec: &ModelSpec,
    prompt: &PromptBundle,
    policy: &RetryPolicy,
    parse: impl Fn(&RawResponse) -> Result<T, E>,
) -> Result<(RawResponse, T), Exhausted> {
    let mut last_error = String::new();
    for attempt in 1..=policy.max_retries + 1 {
        match router.invoke(spec, prompt) {
            Ok(mut response) => {
                response.attempt_count = attempt;
                match parse(&response) {
                    Ok(value) => return Ok((response, value)),
                    Err(e) => last_error = e.to_string(),
                }
            }
            Err(e) => {
                let fatal = e.is_fatal();
                let retry_after = match &e {
                    BackendError::RateLimited { retry_after } => *retry_after,
                    _ => None,
                };
                last_error = e.to_string();
                if fatal {
                    return Err(Exhausted { attempts: attempt, last_error });
                }
                if attempt <= policy.max_retries {
                    let delay = backoff_delay(policy, spec.seed, attempt)
                        .max(retry_after.unwrap_or(0.0));
                    if delay > 0.0 {
                        std::thread::sleep(std::time::Duration::from_secs_f64(delay.min(30.0)));
                    }
                    continue;
                }
            }
        }
        // Parse failures back off too before the next attempt.
        if attempt <= policy.max_retries {
            let delay = backoff_delay(policy, spec.seed, attempt);
            if delay > 0.0 {
                std::thread::sleep(std::time::Duration::from_secs_f64(delay.min(30.0)));
            }
        }
    }
    Err(Exhausted { attempts: policy.max_retries + 1, last_error })
}
