//! Per-frame relevance scoring.
//!
//! Each sampled frame is scored independently: the backend sees the frame
//! plus a fixed binary-choice prompt asking whether the image carries enough
//! information to answer the question, with log-probabilities requested for
//! exactly one generated token. The probability mass on the "A" (yes) option
//! becomes the frame's relevance score in [0, 1].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answering::QueryTask;
use crate::backend::{
    chat_with_retry, image_data_url, BackendError, ChatBackend, ChatRequest, ContentPart,
    RequestContext, RetryPolicy, TokenLogprob,
};
use crate::media::{FrameProposal, ImagePayload};

/// The fixed scoring template. `{q}` receives the full question text,
/// including option lines for multiple-choice tasks.
pub const SCORING_TEMPLATE: &str = "Question: {q}\nDoes the information within the image provide the necessary details to accurately answer the given question?\nA. yes\nB. no\nAnswer with the option's letter from the given choices directly.";

/// Number of top alternatives requested for the scored token.
pub const SCORING_TOP_LOGPROBS: u32 = 5;

/// A rendered scoring prompt, byte-stable for a given question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringPrompt {
    pub query_text: String,
    pub rendered_prompt: String,
}

/// The backend's top-k alternatives for the first generated token. The
/// distribution is truncated, so the exponentiated mass need not sum to 1.
#[derive(Debug, Clone, Default)]
pub struct TokenDistribution {
    entries: Vec<TokenLogprob>,
}

impl TokenDistribution {
    /// Logprobs above zero are clamped to zero so single-token
    /// probabilities stay within [0, 1].
    pub fn new(entries: Vec<TokenLogprob>) -> Self {
        let entries = entries
            .into_iter()
            .map(|mut e| {
                if e.logprob > 0.0 {
                    e.logprob = 0.0;
                }
                e
            })
            .collect();
        TokenDistribution { entries }
    }

    pub fn entries(&self) -> &[TokenLogprob] {
        &self.entries
    }
}

/// How the answer-token mass turns into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// pA / (pA + pB) when both options appear: comparable across frames
    /// whose truncated top-k retains different total mass.
    Renormalized,
    /// Raw pA whenever the yes-option appears.
    RawProbability,
}

impl Default for ScoreMode {
    fn default() -> Self {
        ScoreMode::Renormalized
    }
}

/// A proposal with its relevance score. `degraded` marks frames where the
/// backend produced neither option token; those score 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredFrame {
    pub proposal: FrameProposal,
    pub score: f64,
    pub degraded: bool,
}

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("scoring prompt requires a non-empty question")]
    EmptyQuestion,
    #[error("frame payload is empty")]
    EmptyPayload,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend response carried no logprobs; raw content: {content}")]
    MissingLogprobs { content: String },
}

/// Render the scoring prompt for a task. The question text embeds the MCQ
/// option lines exactly as the answering prompt will show them.
pub fn build_scoring_prompt(task: &QueryTask) -> Result<ScoringPrompt, ScoringError> {
    if task.question.trim().is_empty() {
        return Err(ScoringError::EmptyQuestion);
    }
    let query_text = task.question_block();
    let rendered_prompt = SCORING_TEMPLATE.replacen("{q}", &query_text, 1);
    Ok(ScoringPrompt {
        query_text,
        rendered_prompt,
    })
}

/// Strip surrounding whitespace and at most one trailing '.' or ':' from a
/// token before matching it against an option letter.
fn normalize_token(token: &str) -> &str {
    let trimmed = token.trim();
    trimmed
        .strip_suffix('.')
        .or_else(|| trimmed.strip_suffix(':'))
        .unwrap_or(trimmed)
}

fn first_probability_of(dist: &TokenDistribution, letter: &str) -> Option<f64> {
    dist.entries
        .iter()
        .find(|e| normalize_token(&e.token) == letter)
        .map(|e| e.logprob.exp())
}

/// Convert a first-token distribution into a relevance score.
///
/// With both option tokens present the score is pA / (pA + pB)
/// (or raw pA in [`ScoreMode::RawProbability`]). A alone gives pA; B alone
/// gives 0 without the degraded flag, since an observed "no" is informative;
/// neither token gives 0 with `degraded` set.
pub fn extract_score(dist: &TokenDistribution, mode: ScoreMode) -> (f64, bool) {
    let p_yes = first_probability_of(dist, "A");
    let p_no = first_probability_of(dist, "B");
    match (p_yes, p_no) {
        (Some(pa), Some(pb)) => {
            let score = match mode {
                ScoreMode::Renormalized => {
                    let total = pa + pb;
                    if total > 0.0 {
                        pa / total
                    } else {
                        0.0
                    }
                }
                ScoreMode::RawProbability => pa,
            };
            (score, false)
        }
        (Some(pa), None) => (pa, false),
        (None, Some(_)) => (0.0, false),
        (None, None) => (0.0, true),
    }
}

/// Options for a single scoring call.
#[derive(Debug, Clone, Default)]
pub struct ScoreOptions {
    pub mode: ScoreMode,
    pub retry: RetryPolicy,
}

/// Score one frame: a single-image request with one generated token at
/// temperature 0 and logprobs enabled, then [`extract_score`].
///
/// Pure in its inputs apart from backend I/O, so scoring order and
/// concurrency never change the result for a deterministic backend.
pub fn score_frame(
    backend: &dyn ChatBackend,
    model: &str,
    proposal: &FrameProposal,
    payload: &ImagePayload,
    prompt: &ScoringPrompt,
    opts: &ScoreOptions,
) -> Result<ScoredFrame, ScoringError> {
    if payload.bytes.is_empty() {
        return Err(ScoringError::EmptyPayload);
    }
    let request = build_scoring_request(model, proposal, payload, prompt);
    let response = chat_with_retry(backend, &request, &opts.retry)?;
    let entries = response
        .first_token_top_logprobs
        .ok_or(ScoringError::MissingLogprobs {
            content: response.content,
        })?;
    let dist = TokenDistribution::new(entries);
    let (score, degraded) = extract_score(&dist, opts.mode);
    Ok(ScoredFrame {
        proposal: proposal.clone(),
        score,
        degraded,
    })
}

/// The wire request for one frame score: the image part, then the rendered
/// prompt text, max_tokens 1, temperature 0, top logprobs requested.
pub fn build_scoring_request(
    model: &str,
    proposal: &FrameProposal,
    payload: &ImagePayload,
    prompt: &ScoringPrompt,
) -> ChatRequest {
    ChatRequest {
        model: model.to_string(),
        parts: vec![
            ContentPart::Image {
                data_url: image_data_url(payload),
                detail: None,
            },
            ContentPart::Text(prompt.rendered_prompt.clone()),
        ],
        temperature: 0.0,
        max_tokens: 1,
        top_logprobs: Some(SCORING_TOP_LOGPROBS),
        context: Some(RequestContext {
            media_id: proposal.media_id.clone(),
            frame_indices: vec![proposal.frame_index],
            question_hash: crate::backend::question_hash(&prompt.query_text),
        }),
    }
}
