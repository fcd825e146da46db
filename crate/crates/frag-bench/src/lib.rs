//! Input builders for the hot-path benches.

use frag_core::media::FrameProposal;
use frag_core::scoring::ScoredFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A score vector of the given length, deterministic across runs.
pub fn synthetic_frames(len: usize, seed: u64) -> Vec<ScoredFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|i| ScoredFrame {
            proposal: FrameProposal {
                media_id: "bench".into(),
                frame_index: i,
                ordinal: i,
            },
            score: rng.gen(),
            degraded: false,
        })
        .collect()
}
