//! Fault-injection tests for the live provider path, served from a
//! loopback HTTP listener. No traffic leaves the machine.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::Mutex;

use creval_core::backends::{
    retrying_invoke, BackendError, BackendRouter, ModelSpec, PromptBundle, Provider, RetryPolicy,
};

/// Serves one canned HTTP response per queued entry, then closes.
fn serve_scripted(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<usize>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = listener.local_addr().unwrap();
    let queue = Mutex::new(responses.into_iter().collect::<std::collections::VecDeque<_>>());
    let handle = std::thread::spawn(move || {
        let mut served = 0usize;
        loop {
            let next = queue.lock().unwrap().pop_front();
            let Some((status, body)) = next else { break };
            let (mut stream, _) = listener.accept().expect("accept");
            // Drain the request headers; exact content is irrelevant here.
            let mut buf = [0u8; 65536];
            let _ = stream.read(&mut buf);
            let reason = match status {
                200 => "OK",
                401 => "Unauthorized",
                429 => "Too Many Requests",
                500 => "Internal Server Error",
                _ => "Status",
            };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
            served += 1;
        }
        served
    });
    (format!("http://{addr}"), handle)
}

fn openai_spec() -> ModelSpec {
    ModelSpec::new("gpt-test", Provider::OpenAiStyle, 2.0, 8.0)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 4}
    })
    .to_string()
}

fn with_server_env<T>(base_url: &str, f: impl FnOnce() -> T) -> T {
    // Serialized by the test harness being single-process; env vars are
    // process-global, so tests using this helper must not run concurrently
    // with each other.
    std::env::set_var("OPENAI_BASE_URL", base_url);
    std::env::set_var("OPENAI_API_KEY", "test-key");
    let out = f();
    std::env::remove_var("OPENAI_BASE_URL");
    std::env::remove_var("OPENAI_API_KEY");
    out
}

#[test]
fn live_provider_round_trip_and_fault_injection() {
    let policy = RetryPolicy { max_retries: 3, base_backoff: 0.0 };
    let prompt = PromptBundle::text_only("sys", "user");

    // Healthy call: text and usage parsed, one attempt.
    let (url, handle) = serve_scripted(vec![(200, ok_body("{\"fine\": true}"))]);
    let (response, _) = with_server_env(&url, || {
        let router = BackendRouter::new(None, 4);
        retrying_invoke(&router, &openai_spec(), &prompt, &policy, |r| {
            Ok::<_, String>(r.text.clone())
        })
        .expect("healthy call")
    });
    assert_eq!(response.text, "{\"fine\": true}");
    assert_eq!(response.usage.input_tokens, 11);
    assert_eq!(response.usage.output_tokens, 4);
    assert_eq!(response.attempt_count, 1);
    assert!(response.latency_seconds >= 0.0);
    handle.join().unwrap();

    // 500 twice, then success: retried to completion.
    let (url, handle) = serve_scripted(vec![
        (500, "{}".to_string()),
        (500, "{}".to_string()),
        (200, ok_body("recovered")),
    ]);
    let (response, _) = with_server_env(&url, || {
        let router = BackendRouter::new(None, 4);
        retrying_invoke(&router, &openai_spec(), &prompt, &policy, |r| {
            Ok::<_, String>(r.text.clone())
        })
        .expect("recovers after 5xx")
    });
    assert_eq!(response.attempt_count, 3);
    assert_eq!(response.text, "recovered");
    handle.join().unwrap();

    // 401 is fatal: no retries are attempted.
    let (url, handle) = serve_scripted(vec![(401, "{}".to_string())]);
    let err = with_server_env(&url, || {
        let router = BackendRouter::new(None, 4);
        retrying_invoke(&router, &openai_spec(), &prompt, &policy, |r| {
            Ok::<_, String>(r.text.clone())
        })
        .expect_err("auth failure is fatal")
    });
    assert_eq!(err.attempts, 1);
    assert!(err.last_error.contains("auth"), "{}", err.last_error);
    assert_eq!(handle.join().unwrap(), 1);
}

#[test]
fn unreachable_host_exhausts_after_configured_retries() {
    // Bind-then-drop guarantees a refused port.
    let port = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    std::env::set_var("GEMINI_BASE_URL", format!("http://127.0.0.1:{port}"));
    std::env::set_var("GEMINI_API_KEY", "test-key");
    let router = BackendRouter::new(None, 4);
    let spec = ModelSpec::new("gemini-test", Provider::GeminiStyle, 0.15, 3.0);
    let policy = RetryPolicy { max_retries: 2, base_backoff: 0.0 };
    let err = retrying_invoke(
        &router,
        &spec,
        &PromptBundle::text_only("s", "u"),
        &policy,
        |r| Ok::<_, String>(r.text.clone()),
    )
    .expect_err("connection refused");
    assert_eq!(err.attempts, policy.max_retries + 1);
    std::env::remove_var("GEMINI_BASE_URL");
    std::env::remove_var("GEMINI_API_KEY");
}

#[test]
fn rate_limit_error_carries_retry_hint() {
    let (url, handle) = serve_scripted(vec![(429, "{}".to_string())]);
    std::env::set_var("OPENAI_BASE_URL", &url);
    std::env::set_var("OPENAI_API_KEY", "k");
    let router = BackendRouter::new(None, 4);
    let err = router
        .invoke(&openai_spec(), &PromptBundle::text_only("s", "u"))
        .expect_err("429 surfaces as rate limit");
    assert!(matches!(err, BackendError::RateLimited { .. }));
    std::env::remove_var("OPENAI_BASE_URL");
    std::env::remove_var("OPENAI_API_KEY");
    handle.join().unwrap();
}
