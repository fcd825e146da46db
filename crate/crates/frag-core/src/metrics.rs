//! Answer-quality metrics.
//!
//! Extractive answers are compared with normalized Levenshtein similarity
//! (ANLS), word-level F1, and exact match after normalization. Multiple
//! choice answers are compared by option letter. Each task is scored
//! against all of its acceptable answers and keeps the best match.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answering::UNPARSED;

/// Similarity threshold below which an ANLS match scores zero.
pub const ANLS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no ground truths to compare against")]
    NoGroundTruths,
}

/// Unit-cost edit distance over Unicode scalar values, two-row DP.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr: Vec<usize> = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Shared normalization for string comparison: lowercase, trim, collapse
/// internal whitespace runs to single spaces.
pub fn normalize(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn anls_pair(prediction: &str, truth: &str, tau: f64) -> f64 {
    let p = normalize(prediction);
    let t = normalize(truth);
    if p.is_empty() && t.is_empty() {
        return 1.0;
    }
    let denom = p.chars().count().max(t.chars().count());
    let nl = levenshtein(&p, &t) as f64 / denom as f64;
    if nl < tau {
        1.0 - nl
    } else {
        0.0
    }
}

/// ANLS against the best-matching ground truth, at the standard threshold.
pub fn anls_score(prediction: &str, truths: &[String]) -> Result<f64, MetricError> {
    anls_score_with_tau(prediction, truths, ANLS_THRESHOLD)
}

/// ANLS with a caller-chosen similarity threshold.
pub fn anls_score_with_tau(
    prediction: &str,
    truths: &[String],
    tau: f64,
) -> Result<f64, MetricError> {
    best_over_truths(prediction, truths, |p, t| anls_pair(p, t, tau))
}

/// Default F1 tokenizer: lowercase, split on whitespace, strip ASCII
/// punctuation characters, drop tokens that become empty.
pub fn f1_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split_whitespace()
        .map(|w| w.chars().filter(|c| !c.is_ascii_punctuation()).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

fn f1_pair_with(prediction: &str, truth: &str, tokenize: &dyn Fn(&str) -> Vec<String>) -> f64 {
    let p = tokenize(prediction);
    let t = tokenize(truth);
    if p.is_empty() && t.is_empty() {
        return 1.0;
    }
    if p.is_empty() || t.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::HashMap::new();
    for w in &t {
        *counts.entry(w.as_str()).or_insert(0usize) += 1;
    }
    let mut overlap = 0usize;
    for w in &p {
        if let Some(c) = counts.get_mut(w.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / t.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Word-level F1 against the best-matching ground truth. Tokens are
/// lowercased, ASCII punctuation is removed, and counts are multiset.
pub fn word_f1(prediction: &str, truths: &[String]) -> Result<f64, MetricError> {
    word_f1_with_tokenizer(prediction, truths, &f1_tokens)
}

/// Word-level F1 with a caller-supplied tokenizer.
pub fn word_f1_with_tokenizer(
    prediction: &str,
    truths: &[String],
    tokenize: &dyn Fn(&str) -> Vec<String>,
) -> Result<f64, MetricError> {
    best_over_truths(prediction, truths, |p, t| f1_pair_with(p, t, tokenize))
}

/// 1.0 when the normalized prediction equals any normalized ground truth.
pub fn exact_match(prediction: &str, truths: &[String]) -> Result<f64, MetricError> {
    best_over_truths(prediction, truths, |p, t| {
        if normalize(p) == normalize(t) {
            1.0
        } else {
            0.0
        }
    })
}

/// 1.0 when the parsed option letter matches the ground-truth letter.
/// Unparsed answers always score zero.
pub fn mcq_accuracy(parsed: &str, truths: &[String]) -> Result<f64, MetricError> {
    if truths.is_empty() {
        return Err(MetricError::NoGroundTruths);
    }
    if parsed == UNPARSED {
        return Ok(0.0);
    }
    let hit = truths.iter().any(|t| t.trim().eq_ignore_ascii_case(parsed.trim()));
    Ok(if hit { 1.0 } else { 0.0 })
}

fn best_over_truths(
    prediction: &str,
    truths: &[String],
    pair: impl Fn(&str, &str) -> f64,
) -> Result<f64, MetricError> {
    if truths.is_empty() {
        return Err(MetricError::NoGroundTruths);
    }
    Ok(truths
        .iter()
        .map(|t| pair(prediction, t))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Per-task metric values; only the metrics that apply to the task's answer
/// type are present.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionMetrics {
    pub task_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anls: Option<f64>,
}

/// Corpus-level aggregate: each metric is the mean over the tasks it applies
/// to, absent when no task produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_questions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anls: Option<f64>,
    pub per_question: Vec<QuestionMetrics>,
}

impl MetricsReport {
    pub fn aggregate(per_question: Vec<QuestionMetrics>) -> Self {
        fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
            let values: Vec<f64> = values.collect();
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        }
        MetricsReport {
            n_questions: per_question.len(),
            accuracy: mean(per_question.iter().filter_map(|q| q.accuracy)),
            exact_match: mean(per_question.iter().filter_map(|q| q.exact_match)),
            f1: mean(per_question.iter().filter_map(|q| q.f1)),
            anls: mean(per_question.iter().filter_map(|q| q.anls)),
            per_question,
        }
    }
}
