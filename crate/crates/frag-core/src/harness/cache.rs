//! Content-addressed score cache.
//!
//! One JSON file per key under the cache directory. The key hashes every
//! input that determines a score: scorer model, media id, frame index, the
//! rendered scoring prompt, and the raw-probability switch. Hashing the
//! rendered prompt rather than the question means template changes
//! invalidate cleanly. Writes go through a temp file and rename, so
//! concurrent readers and writers only ever observe complete entries, and a
//! hit returns the score bit for bit.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub score: f64,
    pub degraded: bool,
    /// Seconds since the Unix epoch at write time; informational only.
    pub timestamp: u64,
}

impl CacheEntry {
    pub fn now(score: f64, degraded: bool) -> Self {
        CacheEntry {
            score,
            degraded,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// Sha256 hex of a rendered scoring prompt, one component of the cache key.
pub fn prompt_sha(rendered_prompt: &str) -> String {
    hex(&Sha256::digest(rendered_prompt.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug)]
pub struct ScoreCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ScoreCache {
    pub fn open(dir: &Path) -> std::io::Result<ScoreCache> {
        std::fs::create_dir_all(dir)?;
        Ok(ScoreCache { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Derive the key for one frame score. Components are joined with a
    /// unit separator before hashing so no concatenation can collide.
    pub fn key(
        scorer_model: &str,
        media_id: &str,
        frame_index: usize,
        prompt_sha: &str,
        raw_pa: bool,
    ) -> String {
        let material = format!(
            "{scorer_model}\u{1f}{media_id}\u{1f}{frame_index}\u{1f}{prompt_sha}\u{1f}{raw_pa}"
        );
        hex(&Sha256::digest(material.as_bytes()))
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Look up a key. Missing or unreadable entries read as misses.
    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let text = std::fs::read_to_string(self.path_for(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Insert or replace a key atomically.
    pub fn put(&self, key: &str, entry: &CacheEntry) -> std::io::Result<()> {
        let body = serde_json::to_string(entry).expect("cache entry serializes");
        let tmp = self.dir.join(format!(
            "{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, self.path_for(key))
    }

    /// Number of complete entries on disk.
    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.dir)
            .map(|entries| {
                entries
                    .filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
