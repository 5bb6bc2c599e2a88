//! Chat-completion clients: an OpenAI-compatible HTTP client and the
//! deterministic mock.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use neurochat_core::config::LlmConfig;
use neurochat_core::llm::{mock_llm, ChatRequest, Role};
use serde::Deserialize;
use thiserror::Error;

pub const BASE_URL_ENV: &str = "NEUROCHAT_LLM_BASE_URL";
pub const API_KEY_ENV: &str = "NEUROCHAT_LLM_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    /// Connection refused, timeout, broken body. Retried.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The provider answered with a non-success status.
    #[error("provider returned {status}: {message}")]
    Provider { status: u16, message: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

#[async_trait]
pub trait ChatClient: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;

    fn name(&self) -> &str;
}

/// Offline model: canned replies keyed by the exact final user content,
/// otherwise the echo of [`mock_llm`].
#[derive(Debug, Clone, Default)]
pub struct MockClient {
    canned: HashMap<String, String>,
}

impl MockClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_canned(
        mut self,
        user_content: impl Into<String>,
        reply: impl Into<String>,
    ) -> Self {
        self.canned.insert(user_content.into(), reply.into());
        self
    }
}

#[async_trait]
impl ChatClient for MockClient {
    async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let last_user = request.messages.iter().rev().find(|m| m.role == Role::User);
        if let Some(reply) = last_user.and_then(|m| self.canned.get(&m.content)) {
            return Ok(reply.clone());
        }
        Ok(mock_llm(request))
    }

    fn name(&self) -> &str {
        "mock"
    }
}

pub struct OpenAiClient {
    http: reqwest::Client,
    base_url: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl OpenAiClient {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self {
            http,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
        })
    }

    /// Build from `NEUROCHAT_LLM_BASE_URL` / `NEUROCHAT_LLM_API_KEY`, if set.
    pub fn from_env(cfg: &LlmConfig) -> Option<Result<Self, GatewayError>> {
        let base = std::env::var(BASE_URL_ENV).ok().filter(|s| !s.is_empty())?;
        let key = std::env::var(API_KEY_ENV).ok().filter(|s| !s.is_empty());
        Some(Self::new(base, key, Duration::from_secs(cfg.timeout_s)))
    }
}

fn provider_message(body: &str) -> String {
    serde_json::from_str::<serde_json::Value>(body)
        .ok()
        .and_then(|v| v["error"]["message"].as_str().map(str::to_string))
        .unwrap_or_else(|| body.chars().take(200).collect())
}

#[async_trait]
impl ChatClient for OpenAiClient {
    async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut req = self
            .http
            .post(format!("{}/chat/completions", self.base_url))
            .json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .await
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Provider {
                status: status.as_u16(),
                message: provider_message(&body),
            });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&body).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Malformed("no choices".into()))
    }

    fn name(&self) -> &str {
        "openai-compatible"
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff: Duration,
}

impl From<&LlmConfig> for RetryPolicy {
    fn from(cfg: &LlmConfig) -> Self {
        Self {
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.retry_backoff_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

/// Send with retries on transport failures only; backoff doubles each time.
pub async fn send_chat(
    client: &dyn ChatClient,
    request: &ChatRequest,
    policy: RetryPolicy,
) -> Result<Completion, GatewayError> {
    let started = Instant::now();
    let mut attempt = 0;
    loop {
        attempt += 1;
        match client.complete(request).await {
            Ok(text) => {
                return Ok(Completion {
                    text,
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempts: attempt,
                })
            }
            Err(GatewayError::Transport(e)) if attempt <= policy.max_retries => {
                tracing::warn!(attempt, error = %e, "chat completion failed, retrying");
                tokio::time::sleep(policy.backoff * 2u32.pow(attempt - 1)).await;
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    use neurochat_core::llm::{ChatMode, ChatTurn, PromptBundle};

    struct Flaky {
        fail_first: u32,
        calls: AtomicU32,
    }

    #[async_trait]
    impl ChatClient for Flaky {
        async fn complete(&self, _: &ChatRequest) -> Result<String, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(GatewayError::Transport("refused".into()))
            } else {
                Ok("ok".into())
            }
        }

        fn name(&self) -> &str {
            "flaky"
        }
    }

    fn request(text: &str) -> ChatRequest {
        PromptBundle {
            mode: ChatMode::Adaptive,
            history: vec![ChatTurn::user(text, ChatMode::Adaptive, Some(0.42), 0.0)],
            model: "m".into(),
            temperature: None,
        }
        .to_request()
        .unwrap()
    }

    const FAST: RetryPolicy = RetryPolicy {
        max_retries: 2,
        backoff: Duration::from_millis(1),
    };

    #[tokio::test]
    async fn retries_twice_then_gives_up() {
        let ok = Flaky {
            fail_first: 2,
            calls: AtomicU32::new(0),
        };
        let c = send_chat(&ok, &request("q"), FAST).await.unwrap();
        assert_eq!(c.attempts, 3);
        let bad = Flaky {
            fail_first: 3,
            calls: AtomicU32::new(0),
        };
        assert!(matches!(
            send_chat(&bad, &request("q"), FAST).await,
            Err(GatewayError::Transport(_))
        ));
        assert_eq!(bad.calls.load(Ordering::SeqCst), 3);
    }

    #[tokio::test]
    async fn mock_canned_and_echo() {
        let req = request("hi");
        let content = req.messages[1].content.clone();
        let mock = MockClient::new().with_canned(content, "canned!");
        assert_eq!(mock.complete(&req).await.unwrap(), "canned!");
        let echo = MockClient::new().complete(&req).await.unwrap();
        assert!(echo.contains("score_seen=0.42"));
        assert_eq!(echo, MockClient::new().complete(&req).await.unwrap());
    }

    #[test]
    fn provider_error_message_extracted() {
        assert_eq!(
            provider_message(r#"{"error":{"message":"bad key","type":"auth"}}"#),
            "bad key"
        );
        assert_eq!(provider_message("oops"), "oops");
    }
}
