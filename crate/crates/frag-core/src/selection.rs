//! Top-K selection over scored frames, and diversity statistics.
//!
//! Selection is deliberately plain: take the K highest scores, break ties by
//! the earliest frame index, and restore presentation order. No diversity
//! constraint is applied; diversity is only measured, to make concentration
//! of the selected frames observable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::ScoredFrame;

/// Selection budget K plus the sampling width N it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub k: usize,
    /// Number of proposals that were sampled, kept for provenance.
    pub n_sampled: usize,
}

impl SelectionConfig {
    pub fn new(k: usize, n_sampled: usize) -> Self {
        SelectionConfig { k, n_sampled }
    }
}

/// Coverage statistics of a selection over the full frame range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityStats {
    /// (max index - min index) / (T - 1); 0 for singletons or T = 1.
    pub normalized_span: f64,
    /// Mean pairwise index distance, normalized by T - 1.
    pub mean_pairwise_gap: f64,
}

/// The chosen frames in presentation order, plus selection provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected frames sorted by frame index ascending.
    pub selected: Vec<ScoredFrame>,
    pub config: SelectionConfig,
    /// min(K, number of scored frames).
    pub k_effective: usize,
    /// Number of non-selected frames whose score equals the score at the
    /// selection boundary; nonzero exactly when rank K ties rank K+1.
    pub tie_events: usize,
    /// Filled by [`SelectionResult::attach_spread`] once T is known.
    pub spread: Option<DiversityStats>,
}

impl SelectionResult {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.selected.iter().map(|f| f.proposal.frame_index).collect()
    }

    /// Compute and store diversity statistics for a total frame count.
    pub fn attach_spread(&mut self, t_total: usize) {
        self.spread = Some(diversity(self, t_total));
    }
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("cannot select from an empty score list")]
    EmptyInput,
}

/// Keep the K highest-scoring frames.
///
/// Ranking order is score descending with ties broken by the earliest frame
/// index, so the outcome is independent of input order. The returned frames
/// are re-sorted by frame index ascending (temporal order for videos, page
/// order for documents).
pub fn select_top_k(
    scored: &[ScoredFrame],
    cfg: SelectionConfig,
) -> Result<SelectionResult, SelectionError> {
    if scored.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    let mut ranked: Vec<&ScoredFrame> = scored.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.proposal.frame_index.cmp(&b.proposal.frame_index))
    });
    let k_effective = cfg.k.min(ranked.len());
    let boundary_score = ranked[k_effective - 1].score;
    let tie_events = ranked[k_effective..]
        .iter()
        .take_while(|f| f.score == boundary_score)
        .count();
    let mut selected: Vec<ScoredFrame> = ranked[..k_effective].iter().map(|f| (*f).clone()).collect();
    selected.sort_by_key(|f| f.proposal.frame_index);
    Ok(SelectionResult {
        selected,
        config: cfg,
        k_effective,
        tie_events,
        spread: None,
    })
}

/// Diversity statistics of a selection within a source of `t_total` frames.
pub fn diversity(selected: &SelectionResult, t_total: usize) -> DiversityStats {
    diversity_of_indices(&selected.selected_indices(), t_total)
}

/// Index-level workhorse behind [`diversity`].
pub fn diversity_of_indices(indices: &[usize], t_total: usize) -> DiversityStats {
    if indices.len() < 2 || t_total < 2 {
        return DiversityStats {
            normalized_span: 0.0,
            mean_pairwise_gap: 0.0,
        };
    }
    let denom = (t_total - 1) as f64;
    let min = *indices.iter().min().expect("non-empty");
    let max = *indices.iter().max().expect("non-empty");
    let normalized_span = (max - min) as f64 / denom;

    let mut gap_sum = 0.0f64;
    let mut pairs = 0usize;
    for (i, &a) in indices.iter().enumerate() {
        for &b in &indices[i + 1..] {
            gap_sum += a.abs_diff(b) as f64;
            pairs += 1;
        }
    }
    DiversityStats {
        normalized_span,
        mean_pairwise_gap: gap_sum / pairs as f64 / denom,
    }
}
