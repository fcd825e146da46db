//! HTTP chat backend against any OpenAI-compatible endpoint.

use std::time::Duration;

use super::{parse_wire_response, wire_request_body, BackendError, ChatBackend, ChatRequest, ChatResponse};

/// Environment variable consulted for the bearer credential.
pub const API_KEY_ENV: &str = "FRAG_API_KEY";

pub struct HttpBackend {
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// `base_url` is the prefix before `/chat/completions`, for example
    /// `http://localhost:8000/v1`. The credential, if any, comes from the
    /// `FRAG_API_KEY` environment variable.
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport {
                detail: format!("failed to build HTTP client: {e}"),
            })?;
        Ok(HttpBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            client,
        })
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

impl ChatBackend for HttpBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = wire_request_body(request).to_string();
        let mut builder = self
            .client
            .post(self.endpoint())
            .header("content-type", "application/json")
            .body(body);
        if let Some(key) = &self.api_key {
            builder = builder.header("authorization", format!("Bearer {key}"));
        }
        let response = builder.send().map_err(|e| BackendError::Transport {
            detail: e.to_string(),
        })?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| BackendError::Transport {
            detail: format!("failed to read response body: {e}"),
        })?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http { status, body: text });
        }
        parse_wire_response(&text)
    }
}
