//! Live HTTP provider clients: OpenAI-style chat completions and
//! Gemini-style generateContent.
//!
//! Credentials come from `OPENAI_API_KEY` / `GEMINI_API_KEY`; base URLs can
//! be overridden with `OPENAI_BASE_URL` / `GEMINI_BASE_URL` (used by tests
//! to point at a loopback server). Images travel base64-embedded in the
//! request body for both styles.

use std::sync::OnceLock;
use std::time::Instant;

use base64::Engine as _;
use serde_json::json;

use super::{BackendError, MaxTokens, ModelSpec, PromptBundle, RawResponse, TokenUsage};

pub struct HttpBackends {
    client: OnceLock<reqwest::blocking::Client>,
    openai_base: String,
    gemini_base: String,
}

impl HttpBackends {
    pub fn from_env() -> Self {
        Self {
            client: OnceLock::new(),
            openai_base: std::env::var("OPENAI_BASE_URL")
                .unwrap_or_else(|_| "https://api.openai.com".to_string()),
            gemini_base: std::env::var("GEMINI_BASE_URL")
                .unwrap_or_else(|_| "https://generativelanguage.googleapis.com".to_string()),
        }
    }

    /// Client construction is deferred so mock-only pipelines never touch
    /// networking machinery.
    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(120))
                .build()
                .expect("client construction")
        })
    }

    pub fn invoke_openai(
        &self,
        spec: &ModelSpec,
        prompt: &PromptBundle,
        started: Instant,
    ) -> Result<RawResponse, BackendError> {
        let key = std::env::var("OPENAI_API_KEY")
            .map_err(|_| BackendError::Auth("OPENAI_API_KEY not set".to_string()))?;
        let url = format!("{}/v1/chat/completions", self.openai_base);
        let body = build_openai_body(spec, prompt);
        let response = self
            .client()
            .post(&url)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let text = check_status(response)?;
        let (content, usage) = parse_openai_response(&text)?;
        finish(content, usage, started)
    }

    pub fn invoke_gemini(
        &self,
        spec: &ModelSpec,
        prompt: &PromptBundle,
        started: Instant,
    ) -> Result<RawResponse, BackendError> {
        let key = std::env::var("GEMINI_API_KEY")
            .map_err(|_| BackendError::Auth("GEMINI_API_KEY not set".to_string()))?;
        let url = format!(
            "{}/v1beta/models/{}:generateContent",
            self.gemini_base, spec.model_id
        );
        let body = build_gemini_body(spec, prompt);
        let response = self
            .client()
            .post(&url)
            .header("x-goog-api-key", key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let text = check_status(response)?;
        let (content, usage) = parse_gemini_response(&text)?;
        finish(content, usage, started)
    }
}

fn finish(text: String, usage: TokenUsage, started: Instant) -> Result<RawResponse, BackendError> {
    if text.trim().is_empty() {
        return Err(BackendError::EmptyResponse);
    }
    Ok(RawResponse {
        text,
        usage,
        latency_seconds: started.elapsed().as_secs_f64(),
        attempt_count: 1,
    })
}

fn check_status(response: reqwest::blocking::Response) -> Result<String, BackendError> {
    let status = response.status();
    if status.as_u16() == 401 || status.as_u16() == 403 {
        return Err(BackendError::Auth(format!("provider returned {status}")));
    }
    if status.as_u16() == 429 {
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<f64>().ok());
        return Err(BackendError::RateLimited { retry_after });
    }
    if !status.is_success() {
        // Covers 5xx and remaining 4xx; both are surfaced as transport
        // failures bounded by the caller's retry budget.
        return Err(BackendError::Transport(format!("provider returned {status}")));
    }
    response.text().map_err(|e| BackendError::Transport(e.to_string()))
}

fn data_url(image: &super::ImagePayload) -> String {
    format!(
        "data:{};base64,{}",
        image.mime,
        base64::engine::general_purpose::STANDARD.encode(&image.bytes)
    )
}

pub fn build_openai_body(spec: &ModelSpec, prompt: &PromptBundle) -> serde_json::Value {
    let mut user_content = vec![json!({"type": "text", "text": prompt.user})];
    if let Some(image) = &prompt.image {
        user_content.push(json!({
            "type": "image_url",
            "image_url": {"url": data_url(image)}
        }));
    }
    let mut body = json!({
        "model": spec.model_id,
        "temperature": spec.temperature,
        "seed": spec.seed,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": user_content},
        ],
    });
    if let MaxTokens::Explicit(n) = spec.max_output_tokens {
        body["max_tokens"] = json!(n);
    }
    body
}

pub fn parse_openai_response(text: &str) -> Result<(String, TokenUsage), BackendError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| BackendError::Transport(format!("bad JSON: {e}")))?;
    let content = value["choices"][0]["message"]["content"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    let usage = TokenUsage::new(
        value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
    );
    Ok((content, usage))
}

pub fn build_gemini_body(spec: &ModelSpec, prompt: &PromptBundle) -> serde_json::Value {
    let mut parts = vec![json!({"text": prompt.user})];
    if let Some(image) = &prompt.image {
        parts.push(json!({
            "inline_data": {
                "mime_type": image.mime,
                "data": base64::engine::general_purpose::STANDARD.encode(&image.bytes),
            }
        }));
    }
    let mut generation_config = json!({
        "temperature": spec.temperature,
        "seed": spec.seed,
    });
    if let MaxTokens::Explicit(n) = spec.max_output_tokens {
        generation_config["maxOutputTokens"] = json!(n);
    }
    json!({
        "system_instruction": {"parts": [{"text": prompt.system}]},
        "contents": [{"role": "user", "parts": parts}],
        "generationConfig": generation_config,
    })
}

pub fn parse_gemini_response(text: &str) -> Result<(String, TokenUsage), BackendError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| BackendError::Transport(format!("bad JSON: {e}")))?;
    let mut content = String::new();
    if let Some(parts) = value["candidates"][0]["content"]["parts"].as_array() {
        for part in parts {
            if let Some(t) = part["text"].as_str() {
                content.push_str(t);
            }
        }
    }
    let usage = TokenUsage::new(
        value["usageMetadata"]["promptTokenCount"].as_u64().unwrap_or(0),
        value["usageMetadata"]["candidatesTokenCount"].as_u64().unwrap_or(0),
    );
    Ok((content, usage))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn openai_body_carries_determinism_settings() {
        let mut spec = ModelSpec::new("gpt-4.1", super::super::Provider::OpenAiStyle, 2.0, 8.0);
        spec.seed = 7;
        let prompt = PromptBundle::text_only("sys", "user").with_image(super::super::ImagePayload {
            mime: "image/png".into(),
            bytes: vec![137, 80],
        });
        let body = build_openai_body(&spec, &prompt);
        assert_eq!(body["temperature"], 0.0001);
        assert_eq!(body["seed"], 7);
        // ProviderMax omits the token cap entirely.
        assert!(body.get("max_tokens").is_none());
        let url = body["messages"][1]["content"][1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
    }

    #[test]
    fn explicit_token_cap_is_sent() {
        let mut spec = ModelSpec::new("gpt-4.1", super::super::Provider::OpenAiStyle, 2.0, 8.0);
        spec.max_output_tokens = MaxTokens::Explicit(2048);
        let body = build_openai_body(&spec, &PromptBundle::text_only("s", "u"));
        assert_eq!(body["max_tokens"], 2048);
    }

    #[test]
    fn openai_response_parses_usage() {
        let text = r#"{
            "choices": [{"message": {"content": "{\"a\": 1}"}}],
            "usage": {"prompt_tokens": 1500, "completion_tokens": 90}
        }"#;
        let (content, usage) = parse_openai_response(text).unwrap();
        assert_eq!(content, "{\"a\": 1}");
        assert_eq!(usage, TokenUsage::new(1500, 90));
    }

    #[test]
    fn gemini_body_and_response() {
        let spec = ModelSpec::new("gemini-2.0-flash", super::super::Provider::GeminiStyle, 0.15, 3.0);
        let body = build_gemini_body(&spec, &PromptBundle::text_only("sys", "user"));
        assert_eq!(body["generationConfig"]["temperature"], 0.0001);
        assert!(body["generationConfig"].get("maxOutputTokens").is_none());

        let text = r#"{
            "candidates": [{"content": {"parts": [{"text": "hello "}, {"text": "world"}]}}],
            "usageMetadata": {"promptTokenCount": 12, "candidatesTokenCount": 3}
        }"#;
        let (content, usage) = parse_gemini_response(text).unwrap();
        assert_eq!(content, "hello world");
        assert_eq!(usage, TokenUsage::new(12, 3));
    }
}
