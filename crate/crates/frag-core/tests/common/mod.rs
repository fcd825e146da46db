//! Shared builders for integration tests: synthetic frame directories,
//! JSONL manifests, mock fixtures, and ready-to-run configs.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use frag_core::backend::{
    BackendError, ChatBackend, ChatRequest, ChatResponse, MockBackend, MockFixture,
};
use frag_core::harness::{RetryConfig, RunConfig};
use serde_json::json;

pub struct TestMedia {
    pub dir: PathBuf,
    /// The media id as the pipeline will see it: the path given to open.
    pub id: String,
    pub frames: usize,
}

/// A directory of `frames` tiny png files named in padded order.
pub fn make_media(root: &Path, name: &str, frames: usize) -> TestMedia {
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    for i in 0..frames {
        std::fs::write(dir.join(format!("{i:05}.png")), b"png-stub").unwrap();
    }
    TestMedia {
        id: dir.display().to_string(),
        dir,
        frames,
    }
}

pub fn mcq_line(
    id: &str,
    media: &TestMedia,
    kind: &str,
    question: &str,
    options: &[&str],
    truths: &[&str],
) -> serde_json::Value {
    json!({
        "id": id,
        "media_path": media.id,
        "media_kind": kind,
        "question": question,
        "options": options,
        "answer_type": "mcq",
        "ground_truths": truths,
    })
}

pub fn extractive_line(
    id: &str,
    media: &TestMedia,
    kind: &str,
    question: &str,
    truths: &[&str],
) -> serde_json::Value {
    json!({
        "id": id,
        "media_path": media.id,
        "media_kind": kind,
        "question": question,
        "answer_type": "extractive",
        "ground_truths": truths,
    })
}

pub fn write_manifest(root: &Path, lines: &[serde_json::Value]) -> PathBuf {
    let path = root.join("tasks.jsonl");
    let text = lines
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&path, text).unwrap();
    path
}

/// Plant a two-option distribution with the given yes-probability on the
/// listed frames; unplanted frames keep the mock's strong-no default.
pub fn plant_yes(fixture: &mut MockFixture, media: &TestMedia, frames: &[usize], p_yes: f64) {
    for &frame in frames {
        fixture.set_scores(
            &media.id,
            frame,
            vec![
                ("A".to_string(), p_yes.ln()),
                ("B".to_string(), (1.0 - p_yes).ln()),
            ],
        );
    }
}

pub fn write_fixture(root: &Path, fixture: &MockFixture) -> PathBuf {
    let path = root.join("fixture.json");
    std::fs::write(&path, serde_json::to_string_pretty(fixture).unwrap()).unwrap();
    path
}

/// A config wired for offline mock runs: no delays on retry, modest
/// concurrency, everything else default.
pub fn mock_config(manifest: PathBuf, fixture: PathBuf) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.manifest = manifest;
    cfg.mock_fixture = Some(fixture);
    cfg.scorer.model = "mock-scorer".into();
    cfg.answerer.model = "mock-answerer".into();
    cfg.retry = RetryConfig::immediate(0);
    cfg.concurrency = 4;
    cfg
}

/// Backend that always fails at the transport level, as an unreachable
/// endpoint would.
pub struct UnreachableBackend;

impl ChatBackend for UnreachableBackend {
    fn chat(&self, _request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        Err(BackendError::Transport {
            detail: "connection refused".into(),
        })
    }
}

/// The two mock backends a fixture-driven run would use, as trait objects.
pub fn mock_backends(fixture: &MockFixture) -> (Arc<dyn ChatBackend>, Arc<dyn ChatBackend>) {
    (
        Arc::new(MockBackend::new(fixture.clone())),
        Arc::new(MockBackend::new(fixture.clone())),
    )
}
