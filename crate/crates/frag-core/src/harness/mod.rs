//! Benchmark harness: configs and manifests in, reports and CSVs out.

pub mod cache;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod sweep;

pub use cache::{prompt_sha, CacheEntry, ScoreCache};
pub use config::{ConfigError, EndpointConfig, RetryConfig, RunConfig, TemplateOverrides};
pub use manifest::{load_manifest, ManifestEntry, ManifestError};
pub use pipeline::{
    build_backends, run_pipeline, run_pipeline_with_backends, CountingBackend, PipelineError,
};
pub use report::{
    score_csv, ConfigEcho, FailureCounts, FrameScoreRecord, RunReport, RunStats, TaskStatus,
    TaskTrace,
};
pub use sweep::{sweep, sweep_csv, sweep_with_backends, SweepAxis, SweepOutcome, SweepRow};
