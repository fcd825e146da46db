//! Frame selection augmented generation over long videos and multi-page
//! documents.
//!
//! Long visual inputs are answered in three stages: every candidate frame
//! is scored independently for relevance to the question, the top K frames
//! are kept and restored to presentation order, and the answer is generated
//! from those frames alone. Scoring asks a vision-capable chat model a
//! fixed yes/no question about each frame and reads the probability of the
//! "yes" option from the first-token logprobs, so no model finetuning is
//! involved and scorer and answerer can be different models.

pub mod answering;
pub mod backend;
pub mod harness;
pub mod media;
pub mod metrics;
pub mod scoring;
pub mod selection;

pub use answering::{parse_answer, Answer, AnswerType, QueryTask, UNPARSED};
pub use backend::{
    BackendError, ChatBackend, ChatRequest, ChatResponse, ContentPart, HttpBackend, MockBackend,
    MockFixture, RetryPolicy, TokenLogprob,
};
pub use harness::{
    load_manifest, run_pipeline, sweep, RunConfig, RunReport, ScoreCache, SweepAxis,
};
pub use media::{
    open_media, uniform_indices, uniform_sample, FrameProposal, ImageFormat, ImagePayload,
    MediaKind, MediaSource,
};
pub use metrics::{
    anls_score, anls_score_with_tau, exact_match, levenshtein, mcq_accuracy, word_f1,
    word_f1_with_tokenizer, MetricsReport,
};
pub use scoring::{extract_score, ScoreMode, ScoredFrame, TokenDistribution, SCORING_TEMPLATE};
pub use selection::{select_top_k, DiversityStats, SelectionConfig, SelectionResult};
