//! Deterministic fixture-driven backend for offline runs and tests.
//!
//! Fixture file schema (JSON):
//!
//! ```json
//! {
//!   "scores": {
//!     "<media_id>": { "<frame_index>": [["A", -0.22], ["B", -1.61]] }
//!   },
//!   "answers": {
//!     "<question_hash>": {
//!       "required_frames": [3, 17],
//!       "correct": "B",
//!       "incorrect": "A"
//!     }
//!   }
//! }
//! ```
//!
//! Scoring requests (those asking for logprobs) look up the token
//! distribution for `(media_id, frame_index)`; frames absent from the
//! fixture get a strong "B" default, scoring near zero. Answer requests
//! return the `correct` string when every required frame index is among
//! the request's frames, `incorrect` otherwise.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, TokenLogprob};

/// Stable hash identifying a question in the fixture's `answers` map:
/// lowercase hex SHA-256 of the question text.
pub fn question_hash(question: &str) -> String {
    let digest = Sha256::digest(question.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockAnswer {
    pub required_frames: Vec<usize>,
    pub correct: String,
    pub incorrect: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockFixture {
    /// media_id -> frame_index (as string, JSON map keys) -> distribution.
    #[serde(default)]
    pub scores: HashMap<String, HashMap<String, Vec<(String, f64)>>>,
    /// question_hash -> conditional answer.
    #[serde(default)]
    pub answers: HashMap<String, MockAnswer>,
}

impl MockFixture {
    pub fn from_file(path: &Path) -> Result<Self, MockFixtureError> {
        let text = std::fs::read_to_string(path).map_err(|source| MockFixtureError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| MockFixtureError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Plant a score distribution for one frame.
    pub fn set_scores(&mut self, media_id: &str, frame_index: usize, entries: Vec<(String, f64)>) {
        self.scores
            .entry(media_id.to_string())
            .or_default()
            .insert(frame_index.to_string(), entries);
    }

    /// Register a conditional answer keyed by the question's hash.
    pub fn set_answer(&mut self, question: &str, required_frames: Vec<usize>, correct: &str, incorrect: &str) {
        self.answers.insert(
            question_hash(question),
            MockAnswer {
                required_frames,
                correct: correct.to_string(),
                incorrect: incorrect.to_string(),
            },
        );
    }
}

#[derive(Debug, Error)]
pub enum MockFixtureError {
    #[error("failed to read mock fixture {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse mock fixture {path}: {source}")]
    Parse {
        path: std::path::PathBuf,
        source: serde_json::Error,
    },
}

pub struct MockBackend {
    fixture: MockFixture,
}

/// Distribution returned for frames the fixture does not mention.
fn default_distribution() -> Vec<TokenLogprob> {
    vec![TokenLogprob {
        token: "B".to_string(),
        logprob: (0.99f64).ln(),
    }]
}

impl MockBackend {
    pub fn new(fixture: MockFixture) -> Self {
        MockBackend { fixture }
    }

    fn score_response(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let ctx = request.context.as_ref().ok_or_else(|| BackendError::Protocol {
            detail: "mock backend requires a request context".to_string(),
            raw_body: String::new(),
        })?;
        let frame_index = *ctx.frame_indices.first().ok_or_else(|| BackendError::Protocol {
            detail: "scoring request context has no frame index".to_string(),
            raw_body: String::new(),
        })?;
        let entries: Vec<TokenLogprob> = self
            .fixture
            .scores
            .get(&ctx.media_id)
            .and_then(|frames| frames.get(&frame_index.to_string()))
            .map(|pairs| {
                pairs
                    .iter()
                    .map(|(token, logprob)| TokenLogprob {
                        token: token.clone(),
                        logprob: *logprob,
                    })
                    .collect()
            })
            .unwrap_or_else(default_distribution);
        let content = entries
            .iter()
            .max_by(|a, b| a.logprob.total_cmp(&b.logprob))
            .map(|e| e.token.clone())
            .unwrap_or_default();
        Ok(ChatResponse {
            content,
            first_token_top_logprobs: Some(entries),
        })
    }

    fn answer_response(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let ctx = request.context.as_ref().ok_or_else(|| BackendError::Protocol {
            detail: "mock backend requires a request context".to_string(),
            raw_body: String::new(),
        })?;
        let content = match self.fixture.answers.get(&ctx.question_hash) {
            None => "I cannot determine the answer.".to_string(),
            Some(answer) => {
                let has_all = answer
                    .required_frames
                    .iter()
                    .all(|required| ctx.frame_indices.contains(required));
                if has_all {
                    answer.correct.clone()
                } else {
                    answer.incorrect.clone()
                }
            }
        };
        Ok(ChatResponse {
            content,
            first_token_top_logprobs: None,
        })
    }
}

impl ChatBackend for MockBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        if request.top_logprobs.is_some() {
            self.score_response(request)
        } else {
            self.answer_response(request)
        }
    }
}
