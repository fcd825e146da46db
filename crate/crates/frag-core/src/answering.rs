//! Answer generation from the selected frames.
//!
//! The answer request is one user message: the selected frames as image
//! parts in presentation order, followed by the question. Nothing in the
//! text hints that the frames were selected from a longer input. Responses
//! are parsed into a comparable form: an option letter for multiple choice,
//! a normalized short string for extractive answers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{image_data_url, ChatRequest, ContentPart, RequestContext};
use crate::media::ImagePayload;
use crate::selection::SelectionResult;

/// Sentinel parsed value for MCQ responses that match no option.
pub const UNPARSED: &str = "unparsed";

/// Instruction line appended to multiple-choice answer prompts.
pub const MCQ_INSTRUCTION: &str = "Answer with the option's letter from the given choices directly.";

/// Instruction line appended to extractive answer prompts.
pub const EXTRACTIVE_INSTRUCTION: &str = "Answer the question using a single word or phrase.";

/// Token budget for answers; benchmark answers are letters or short phrases.
pub const ANSWER_MAX_TOKENS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerType {
    Mcq,
    Extractive,
}

/// One question to answer about one media source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryTask {
    pub id: String,
    pub question: String,
    /// Ordered (letter, text) pairs; empty for extractive tasks.
    pub options: Vec<(char, String)>,
    pub answer_type: AnswerType,
    /// Acceptable answers; may be empty for inference-only runs.
    pub ground_truths: Vec<String>,
}

impl QueryTask {
    /// The question as shown to the model: the question text, then for MCQ
    /// the option lines, one per line as `X. text`.
    pub fn question_block(&self) -> String {
        if self.options.is_empty() {
            return self.question.clone();
        }
        let mut block = self.question.clone();
        for (letter, text) in &self.options {
            block.push('\n');
            block.push_str(&format!("{letter}. {text}"));
        }
        block
    }

    pub fn option_letters(&self) -> Vec<char> {
        self.options.iter().map(|(letter, _)| *letter).collect()
    }
}

/// A backend reply paired with its parsed, comparable form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Answer {
    pub raw: String,
    pub parsed: String,
}

#[derive(Debug, Error)]
pub enum AnsweringError {
    #[error("no frames selected; need at least one image to answer from")]
    NoFrames,
    #[error("selection has {selected} frames but {images} image payloads were supplied")]
    ImageCountMismatch { selected: usize, images: usize },
}

/// Template placeholders: `{question}` for the raw question text and
/// `{options}` for the rendered option lines (empty for extractive tasks).
fn render_template(template: &str, task: &QueryTask) -> String {
    let options = task
        .options
        .iter()
        .map(|(letter, text)| format!("{letter}. {text}"))
        .collect::<Vec<_>>()
        .join("\n");
    template
        .replace("{question}", &task.question)
        .replace("{options}", &options)
}

/// The default answer prompt text for a task.
pub fn default_answer_text(task: &QueryTask) -> String {
    match task.answer_type {
        AnswerType::Mcq => format!("{}\n{}", task.question_block(), MCQ_INSTRUCTION),
        AnswerType::Extractive => format!("{}\n{}", task.question_block(), EXTRACTIVE_INSTRUCTION),
    }
}

/// Build the multi-image answer request: K image parts in frame-index order,
/// then the question text. `template` overrides the default prompt wording
/// when a dataset supplies its own.
pub fn build_answer_request(
    model: &str,
    task: &QueryTask,
    selection: &SelectionResult,
    images: &[ImagePayload],
    detail: Option<&str>,
    template: Option<&str>,
) -> Result<ChatRequest, AnsweringError> {
    if selection.selected.is_empty() {
        return Err(AnsweringError::NoFrames);
    }
    if images.len() != selection.selected.len() {
        return Err(AnsweringError::ImageCountMismatch {
            selected: selection.selected.len(),
            images: images.len(),
        });
    }
    let text = match template {
        Some(t) => render_template(t, task),
        None => default_answer_text(task),
    };
    let mut parts: Vec<ContentPart> = images
        .iter()
        .map(|payload| ContentPart::Image {
            data_url: image_data_url(payload),
            detail: detail.map(str::to_string),
        })
        .collect();
    parts.push(ContentPart::Text(text));
    let media_id = selection
        .selected
        .first()
        .map(|f| f.proposal.media_id.clone())
        .unwrap_or_default();
    Ok(ChatRequest {
        model: model.to_string(),
        parts,
        temperature: 0.0,
        max_tokens: ANSWER_MAX_TOKENS,
        top_logprobs: None,
        context: Some(RequestContext {
            media_id,
            frame_indices: selection.selected.iter().map(|f| f.proposal.frame_index).collect(),
            question_hash: crate::backend::question_hash(&task.question),
        }),
    })
}

/// Parse a raw backend reply into a comparable answer.
///
/// MCQ: the first standalone option letter wins; a letter is standalone when
/// it is preceded by the start of the string or a non-alphanumeric character
/// and followed by the end, a non-alphanumeric character, or one of `.`,
/// `)`, `:`. If no letter matches, a whole-string case-insensitive match of
/// an option's full text resolves to that option; otherwise `"unparsed"`.
///
/// Extractive: trim, drop trailing periods, collapse internal whitespace.
pub fn parse_answer(raw: &str, task: &QueryTask) -> String {
    match task.answer_type {
        AnswerType::Mcq => parse_mcq(raw, task),
        AnswerType::Extractive => normalize_extractive(raw),
    }
}

fn parse_mcq(raw: &str, task: &QueryTask) -> String {
    let letters = task.option_letters();
    let chars: Vec<char> = raw.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if !letters.contains(&c) {
            continue;
        }
        let left_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        if !left_ok {
            continue;
        }
        match chars.get(i + 1) {
            None => return c.to_string(),
            Some(&next) if matches!(next, '.' | ')' | ':') => return c.to_string(),
            Some(&next) if !next.is_alphanumeric() => return c.to_string(),
            _ => {}
        }
    }
    let trimmed = raw.trim();
    for (letter, text) in &task.options {
        if trimmed.to_lowercase() == text.to_lowercase() {
            return letter.to_string();
        }
    }
    UNPARSED.to_string()
}

/// Extractive normalization. Trailing periods and whitespace are stripped to
/// a fixed point so the function is idempotent.
fn normalize_extractive(raw: &str) -> String {
    let mut s = raw.trim();
    loop {
        let stripped = s.trim_end().trim_end_matches('.');
        if stripped == s {
            break;
        }
        s = stripped;
    }
    s.trim().split_whitespace().collect::<Vec<_>>().join(" ")
}
