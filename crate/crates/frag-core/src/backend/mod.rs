//! Chat backend abstraction and the OpenAI-compatible wire protocol.
//!
//! Scoring and answering both speak the same protocol: one user message with
//! image parts (data-URL base64) and a text part, POSTed to
//! `{base_url}/chat/completions`. Scoring additionally requests
//! log-probabilities for the first generated token.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::ImagePayload;

pub mod http;
pub mod mock;

pub use http::HttpBackend;
pub use mock::{question_hash, MockBackend, MockFixture, MockFixtureError};

/// One (token, logprob) alternative for a generated token position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

/// A piece of user-message content, in wire order.
#[derive(Debug, Clone)]
pub enum ContentPart {
    Text(String),
    Image {
        data_url: String,
        /// Opaque resolution hint passed through to the backend untouched.
        detail: Option<String>,
    },
}

/// Out-of-band identity of what a request is about. Never serialized onto
/// the wire; the mock backend uses it to resolve fixture entries.
#[derive(Debug, Clone, Default)]
pub struct RequestContext {
    pub media_id: String,
    pub frame_indices: Vec<usize>,
    pub question_hash: String,
}

/// A single-turn chat request: one user message of interleaved parts.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub model: String,
    pub parts: Vec<ContentPart>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// When set, ask for log-probabilities with this many top alternatives
    /// per generated token.
    pub top_logprobs: Option<u32>,
    pub context: Option<RequestContext>,
}

/// Digested backend reply: generated text plus, when requested, the top
/// alternatives for the first generated token.
#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub content: String,
    pub first_token_top_logprobs: Option<Vec<TokenLogprob>>,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {detail}")]
    Transport { detail: String },
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed backend response ({detail}); raw body: {raw_body}")]
    Protocol { detail: String, raw_body: String },
}

impl BackendError {
    /// Transport failures and server-side errors are worth retrying;
    /// client errors and malformed bodies are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { .. } => true,
            BackendError::Http { status, .. } => *status >= 500,
            BackendError::Protocol { .. } => false,
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

/// A chat-completions endpoint. Implementations must be safe to call from
/// many threads at once; results must depend only on the request.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

/// Encode an image payload as a `data:` URL for an image part.
pub fn image_data_url(payload: &ImagePayload) -> String {
    format!("data:{};base64,{}", payload.format.mime(), BASE64.encode(&payload.bytes))
}

/// Build the exact JSON body POSTed to `/chat/completions`.
///
/// The request context is deliberately absent: it is local metadata, not
/// part of the protocol.
pub fn wire_request_body(request: &ChatRequest) -> serde_json::Value {
    let content: Vec<serde_json::Value> = request
        .parts
        .iter()
        .map(|part| match part {
            ContentPart::Text(text) => serde_json::json!({ "type": "text", "text": text }),
            ContentPart::Image { data_url, detail } => {
                let mut image_url = serde_json::json!({ "url": data_url });
                if let Some(detail) = detail {
                    image_url["detail"] = serde_json::Value::String(detail.clone());
                }
                serde_json::json!({ "type": "image_url", "image_url": image_url })
            }
        })
        .collect();
    let mut body = serde_json::json!({
        "model": request.model,
        "messages": [ { "role": "user", "content": content } ],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(k) = request.top_logprobs {
        body["logprobs"] = serde_json::Value::Bool(true);
        body["top_logprobs"] = serde_json::json!(k);
    }
    body
}

/// Parse a chat-completions response body into a [`ChatResponse`].
///
/// Reads `choices[0].message.content` and, when present,
/// `choices[0].logprobs.content[0].top_logprobs`.
pub fn parse_wire_response(raw_body: &str) -> Result<ChatResponse, BackendError> {
    let protocol = |detail: &str| BackendError::Protocol {
        detail: detail.to_string(),
        raw_body: raw_body.to_string(),
    };
    let value: serde_json::Value =
        serde_json::from_str(raw_body).map_err(|e| protocol(&format!("invalid JSON: {e}")))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| protocol("missing choices[0]"))?;
    let content = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .ok_or_else(|| protocol("missing choices[0].message.content"))?
        .to_string();
    let first_token_top_logprobs = match choice.get("logprobs").filter(|v| !v.is_null()) {
        None => None,
        Some(lp) => {
            let tops = lp
                .get("content")
                .and_then(|c| c.get(0))
                .and_then(|t| t.get("top_logprobs"))
                .and_then(|t| t.as_array())
                .ok_or_else(|| protocol("missing logprobs.content[0].top_logprobs"))?;
            let mut entries = Vec::with_capacity(tops.len());
            for entry in tops {
                let token = entry
                    .get("token")
                    .and_then(|t| t.as_str())
                    .ok_or_else(|| protocol("top_logprobs entry missing token"))?;
                let logprob = entry
                    .get("logprob")
                    .and_then(|l| l.as_f64())
                    .ok_or_else(|| protocol("top_logprobs entry missing logprob"))?;
                entries.push(TokenLogprob {
                    token: token.to_string(),
                    logprob,
                });
            }
            Some(entries)
        }
    };
    Ok(ChatResponse {
        content,
        first_token_top_logprobs,
    })
}

/// Backoff schedule: retry transport errors and 5xx responses up to
/// `max_retries` times, sleeping `base_delay * factor^attempt` in between.
/// The defaults give 0.5 s then 2 s.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(500),
            factor: 4.0,
        }
    }
}

impl RetryPolicy {
    pub fn with_retries(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            ..RetryPolicy::default()
        }
    }

    /// Zero-delay variant, used by tests.
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: Duration::ZERO,
            factor: 1.0,
        }
    }

    pub fn delay_before_retry(&self, retry_number: u32) -> Duration {
        let scale = self.factor.powi(retry_number as i32);
        self.base_delay.mul_f64(scale)
    }
}

/// Issue a chat call, retrying per policy. Non-retryable errors (4xx,
/// malformed responses) surface immediately.
pub fn chat_with_retry(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    policy: &RetryPolicy,
) -> Result<ChatResponse, BackendError> {
    let mut retries_used = 0;
    loop {
        match backend.chat(request) {
            Ok(response) => return Ok(response),
            Err(err) if err.is_retryable() && retries_used < policy.max_retries => {
                let delay = policy.delay_before_retry(retries_used);
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
                retries_used += 1;
            }
            Err(err) => return Err(err),
        }
    }
}
