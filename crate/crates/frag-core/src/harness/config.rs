//! Run configuration.
//!
//! A config names the backend endpoints, the sampling and selection sizes,
//! and the execution knobs. Sizes left unset fall back to per-kind
//! defaults: videos sample 256 frames and keep 32, documents take every
//! page and keep 2.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::RetryPolicy;
use crate::media::{DecoderConfig, MediaKind, OpenOptions};
use crate::scoring::ScoreMode;

pub const VIDEO_DEFAULT_N_SAMPLED: usize = 256;
pub const VIDEO_DEFAULT_K_SELECTED: usize = 32;
pub const DOCUMENT_DEFAULT_K_SELECTED: usize = 2;

/// One chat-completions endpoint and the model served there.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_secs: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: String::new(),
            model: String::new(),
            timeout_secs: 120,
        }
    }
}

impl EndpointConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

/// Serializable retry settings; see [`RetryPolicy`] for semantics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryConfig {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub backoff_factor: f64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        let policy = RetryPolicy::default();
        RetryConfig {
            max_retries: policy.max_retries,
            base_delay_ms: policy.base_delay.as_millis() as u64,
            backoff_factor: policy.factor,
        }
    }
}

impl RetryConfig {
    pub fn to_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.base_delay_ms),
            factor: self.backoff_factor,
        }
    }

    /// Retries without sleeping, for offline tests.
    pub fn immediate(max_retries: u32) -> Self {
        RetryConfig {
            max_retries,
            base_delay_ms: 0,
            backoff_factor: 1.0,
        }
    }
}

/// Answer prompt overrides by answer type. Placeholders: `{question}`,
/// `{options}`. A template carried by a manifest entry wins over these.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateOverrides {
    pub mcq: Option<String>,
    pub extractive: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// JSONL task manifest; media paths inside resolve relative to it.
    pub manifest: PathBuf,
    pub scorer: EndpointConfig,
    pub answerer: EndpointConfig,
    /// Frames sampled per task before scoring; unset means the per-kind
    /// default (256 for video, every page for documents).
    pub n_sampled: Option<usize>,
    /// Frames kept after scoring; unset means the per-kind default
    /// (32 for video, 2 for documents).
    pub k_selected: Option<usize>,
    /// Worker threads for frame scoring. Results never depend on it.
    pub concurrency: usize,
    pub retry: RetryConfig,
    /// Score cache directory; unset disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Report and CSV output directory; unset keeps results in memory.
    pub out_dir: Option<PathBuf>,
    /// Fixture file enabling the offline mock backend for both roles.
    pub mock_fixture: Option<PathBuf>,
    /// Use the raw yes-probability instead of renormalizing over yes/no.
    pub raw_pa: bool,
    /// Optional image detail hint forwarded verbatim to the backend.
    pub detail: Option<String>,
    pub templates: TemplateOverrides,
    /// Skip scoring and keep K uniformly spaced frames; the baseline the
    /// scored selection is compared against.
    pub uniform_baseline: bool,
    pub decoder: DecoderConfig,
    /// Where decoded video frames land; unset uses a temp directory.
    pub decode_root: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: PathBuf::new(),
            scorer: EndpointConfig::default(),
            answerer: EndpointConfig::default(),
            n_sampled: None,
            k_selected: None,
            concurrency: 8,
            retry: RetryConfig::default(),
            cache_dir: None,
            out_dir: None,
            mock_fixture: None,
            raw_pa: false,
            detail: None,
            templates: TemplateOverrides::default(),
            uniform_baseline: false,
            decoder: DecoderConfig::default(),
            decode_root: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("manifest path is required")]
    MissingManifest,
    #[error("concurrency must be at least 1")]
    InvalidConcurrency,
    #[error("{role} endpoint needs base_url and model (or set mock_fixture)")]
    IncompleteEndpoint { role: &'static str },
    #[error("n_sampled must be at least 1")]
    InvalidNSampled,
    #[error("k_selected must be at least 1")]
    InvalidKSelected,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.manifest.as_os_str().is_empty() {
            return Err(ConfigError::MissingManifest);
        }
        if self.concurrency < 1 {
            return Err(ConfigError::InvalidConcurrency);
        }
        if self.n_sampled == Some(0) {
            return Err(ConfigError::InvalidNSampled);
        }
        if self.k_selected == Some(0) {
            return Err(ConfigError::InvalidKSelected);
        }
        if self.mock_fixture.is_none() {
            for (role, ep) in [("scorer", &self.scorer), ("answerer", &self.answerer)] {
                if ep.base_url.is_empty() || ep.model.is_empty() {
                    return Err(ConfigError::IncompleteEndpoint { role });
                }
            }
        }
        Ok(())
    }

    /// Sampling budget for a media kind; `None` means take every frame.
    pub fn effective_n(&self, kind: MediaKind) -> Option<usize> {
        self.n_sampled.or(match kind {
            MediaKind::Video => Some(VIDEO_DEFAULT_N_SAMPLED),
            MediaKind::Document => None,
        })
    }

    /// Selection size for a media kind.
    pub fn effective_k(&self, kind: MediaKind) -> usize {
        self.k_selected.unwrap_or(match kind {
            MediaKind::Video => VIDEO_DEFAULT_K_SELECTED,
            MediaKind::Document => DOCUMENT_DEFAULT_K_SELECTED,
        })
    }

    pub fn score_mode(&self) -> ScoreMode {
        if self.raw_pa {
            ScoreMode::RawProbability
        } else {
            ScoreMode::Renormalized
        }
    }

    pub fn open_options(&self) -> OpenOptions {
        let mut opts = OpenOptions {
            decoder: self.decoder.clone(),
            ..OpenOptions::default()
        };
        if let Some(root) = &self.decode_root {
            opts.decode_root = root.clone();
        }
        opts
    }
}
