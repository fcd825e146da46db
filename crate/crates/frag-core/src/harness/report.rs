//! Run reports.
//!
//! A report holds one trace per manifest task plus aggregate metrics,
//! failure counts, and execution stats. Traces carry every score and the
//! selection parameters, so a selection can be re-run offline from the
//! report alone. The `stats` block is the only part allowed to vary
//! between equivalent runs (timings, call counters, cache hits);
//! [`RunReport::normalized_for_comparison`] strips it so determinism checks
//! can compare everything else verbatim.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::answering::Answer;
use crate::media::MediaKind;
use crate::metrics::{MetricsReport, QuestionMetrics};
use crate::selection::DiversityStats;

/// One scored frame as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScoreRecord {
    pub frame_index: usize,
    pub score: f64,
    pub degraded: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Completed,
    Failed,
    /// Skipped because the run aborted before reaching this task.
    NotRun,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskTrace {
    pub task_id: String,
    pub media_id: String,
    pub media_kind: MediaKind,
    pub status: TaskStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Total frames T in the opened media.
    pub frame_count: usize,
    /// Proposals scored (or kept directly in uniform-baseline mode).
    pub n_sampled: usize,
    pub k_requested: usize,
    pub k_effective: usize,
    pub tie_events: usize,
    /// All scored proposals in frame-index order; empty in uniform-baseline
    /// mode and for tasks that never reached scoring.
    pub frame_scores: Vec<FrameScoreRecord>,
    pub selected_indices: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spread: Option<DiversityStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<Answer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<QuestionMetrics>,
}

impl TaskTrace {
    /// A placeholder trace for a task the run never reached.
    pub fn not_run(task_id: &str, media_id: &str, media_kind: MediaKind) -> Self {
        TaskTrace {
            task_id: task_id.to_string(),
            media_id: media_id.to_string(),
            media_kind,
            status: TaskStatus::NotRun,
            error: None,
            frame_count: 0,
            n_sampled: 0,
            k_requested: 0,
            k_effective: 0,
            tie_events: 0,
            frame_scores: vec![],
            selected_indices: vec![],
            spread: None,
            answer: None,
            metrics: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub tasks_failed: usize,
    pub tasks_not_run: usize,
    /// Frames whose distribution contained neither option token.
    pub degraded_frames: usize,
    /// MCQ answers that matched no option.
    pub unparsed_answers: usize,
}

/// Execution telemetry. Excluded from normalized comparison: wall times and
/// counters legitimately differ between runs that are otherwise identical.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub concurrency: usize,
    pub scoring_wall_ms: u64,
    pub answer_wall_ms: u64,
    /// Backend attempts, retries included.
    pub scoring_calls: u64,
    pub answer_calls: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub started_unix_ms: u64,
}

/// The inputs that shaped results, echoed for provenance. Execution-only
/// knobs (concurrency, cache location) live in [`RunStats`] instead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub scorer_model: String,
    pub answerer_model: String,
    pub n_sampled: Option<usize>,
    pub k_selected: Option<usize>,
    pub raw_pa: bool,
    pub uniform_baseline: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub aborted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub tasks: Vec<TaskTrace>,
    pub metrics: MetricsReport,
    pub failures: FailureCounts,
    pub stats: RunStats,
}

impl RunReport {
    /// Everything except the stats block, as a JSON value. Two runs of the
    /// same work must compare equal here regardless of concurrency, cache
    /// temperature, or timing.
    pub fn normalized_for_comparison(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("report serializes");
        value
            .as_object_mut()
            .expect("report is an object")
            .remove("stats");
        value
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_json_pretty())
    }

    pub fn from_json_file(path: &Path) -> Result<Self, ReportReadError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReportReadError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ReportReadError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskTrace> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportReadError {
    #[error("failed to read report {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse report {path}: {source}")]
    Parse {
        path: std::path::PathBuf,
        source: serde_json::Error,
    },
}

/// Per-task score dump in CSV form: one row per scored frame.
pub fn score_csv(trace: &TaskTrace) -> String {
    let mut out = String::from("frame_index,score,selected\n");
    for record in &trace.frame_scores {
        out.push_str(&format!(
            "{},{},{}\n",
            record.frame_index, record.score, record.selected as u8
        ));
    }
    out
}

/// File-name-safe form of a task id for CSV sidecars.
pub fn sanitize_task_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}
