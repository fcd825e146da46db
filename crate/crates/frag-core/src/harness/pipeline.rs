//! End-to-end run orchestration.
//!
//! Per task: open media, uniformly sample N proposals, score every proposal
//! (cache first, then backend, frames fanned out over a bounded worker
//! pool), select the top K, answer from the selected frames, and score
//! metrics against ground truths. Tasks run in sequence; only frame scoring
//! inside a task is concurrent, and results are keyed by slot so worker
//! count and scheduling never change the report.
//!
//! Failure policy: a task that fails in any stage is recorded as failed and
//! the run continues. The exception is a transport-level backend error
//! before any backend call has succeeded; that means the endpoint is
//! unreachable, so the run aborts and remaining tasks are marked not run.

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::answering::{
    build_answer_request, parse_answer, Answer, AnswerType, AnsweringError, QueryTask, UNPARSED,
};
use crate::backend::{
    chat_with_retry, BackendError, ChatBackend, ChatRequest, ChatResponse, HttpBackend,
    MockBackend, MockFixture, MockFixtureError,
};
use crate::harness::cache::{prompt_sha, CacheEntry, ScoreCache};
use crate::harness::config::{ConfigError, RunConfig};
use crate::harness::manifest::{load_manifest, ManifestEntry, ManifestError};
use crate::harness::report::{
    sanitize_task_id, score_csv, ConfigEcho, FailureCounts, FrameScoreRecord, RunReport, RunStats,
    TaskStatus, TaskTrace,
};
use crate::media::{open_media, uniform_indices, uniform_sample, MediaError, MediaSource};
use crate::metrics::{
    anls_score, exact_match, mcq_accuracy, word_f1, MetricsReport, QuestionMetrics,
};
use crate::scoring::{
    build_scoring_prompt, score_frame, ScoreOptions, ScoredFrame, ScoringError, ScoringPrompt,
};
use crate::selection::{select_top_k, SelectionConfig, SelectionResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("failed to load mock fixture: {0}")]
    Fixture(#[from] MockFixtureError),
    #[error("failed to build http backend: {0}")]
    Backend(#[from] BackendError),
    #[error("failed to open score cache {path}: {source}")]
    Cache {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to write outputs under {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("sweep values must be non-empty")]
    EmptySweep,
}

/// Wraps a backend and counts attempts and successes across threads.
pub struct CountingBackend {
    inner: Arc<dyn ChatBackend>,
    attempts: AtomicU64,
    successes: AtomicU64,
}

impl CountingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        CountingBackend {
            inner,
            attempts: AtomicU64::new(0),
            successes: AtomicU64::new(0),
        }
    }

    /// Backend calls attempted, retries included.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }

    pub fn successes(&self) -> u64 {
        self.successes.load(Ordering::Relaxed)
    }
}

impl ChatBackend for CountingBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.attempts.fetch_add(1, Ordering::Relaxed);
        let result = self.inner.chat(request);
        if result.is_ok() {
            self.successes.fetch_add(1, Ordering::Relaxed);
        }
        result
    }
}

/// Build the scorer and answerer backends a config asks for: mock when a
/// fixture is configured, HTTP otherwise.
pub fn build_backends(
    cfg: &RunConfig,
) -> Result<(Arc<dyn ChatBackend>, Arc<dyn ChatBackend>), PipelineError> {
    match &cfg.mock_fixture {
        Some(path) => {
            let fixture = MockFixture::from_file(path)?;
            Ok((
                Arc::new(MockBackend::new(fixture.clone())),
                Arc::new(MockBackend::new(fixture)),
            ))
        }
        None => Ok((
            Arc::new(HttpBackend::new(&cfg.scorer.base_url, cfg.scorer.timeout())?),
            Arc::new(HttpBackend::new(
                &cfg.answerer.base_url,
                cfg.answerer.timeout(),
            )?),
        )),
    }
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let (scorer, answerer) = build_backends(cfg)?;
    run_pipeline_with_backends(cfg, scorer, answerer)
}

/// What went wrong inside one task, and whether it sinks the whole run.
enum TaskFailure {
    Fail(String),
    Abort(String),
}

enum FrameError {
    Media(MediaError),
    Scoring(ScoringError),
    CacheWrite(std::io::Error),
}

impl FrameError {
    fn describe(&self) -> String {
        match self {
            FrameError::Media(e) => e.to_string(),
            FrameError::Scoring(e) => e.to_string(),
            FrameError::CacheWrite(e) => format!("cache write failed: {e}"),
        }
    }
}

struct Counters {
    cache_hits: AtomicU64,
    cache_misses: AtomicU64,
}

struct TaskRunner<'a> {
    cfg: &'a RunConfig,
    scorer: &'a CountingBackend,
    answerer: &'a CountingBackend,
    cache: Option<&'a ScoreCache>,
    counters: &'a Counters,
}

impl<'a> TaskRunner<'a> {
    fn total_successes(&self) -> u64 {
        self.scorer.successes() + self.answerer.successes()
    }

    /// Abort only when the backend looks unreachable: a transport-level
    /// failure before any call in the run has succeeded.
    fn classify_backend_error(&self, e: &BackendError, stage: &str) -> TaskFailure {
        if e.is_transport() && self.total_successes() == 0 {
            TaskFailure::Abort(format!("backend unreachable during {stage}: {e}"))
        } else {
            TaskFailure::Fail(format!("{stage} failed: {e}"))
        }
    }

    fn classify_frame_error(&self, e: &FrameError) -> TaskFailure {
        if let FrameError::Scoring(ScoringError::Backend(be)) = e {
            return self.classify_backend_error(be, "scoring");
        }
        TaskFailure::Fail(e.describe())
    }

    fn run(&self, entry: &ManifestEntry, stats: &mut RunStats) -> (TaskTrace, Option<String>) {
        let mut trace = TaskTrace::not_run(
            &entry.task.id,
            &entry.media_path.display().to_string(),
            entry.media_kind,
        );
        trace.status = TaskStatus::Completed;
        match self.run_inner(entry, &mut trace, stats) {
            Ok(()) => (trace, None),
            Err(TaskFailure::Fail(msg)) => {
                trace.status = TaskStatus::Failed;
                trace.error = Some(msg);
                if trace.metrics.is_none() {
                    trace.metrics = zero_metrics(&entry.task);
                }
                (trace, None)
            }
            Err(TaskFailure::Abort(reason)) => {
                trace.status = TaskStatus::Failed;
                trace.error = Some(reason.clone());
                if trace.metrics.is_none() {
                    trace.metrics = zero_metrics(&entry.task);
                }
                (trace, Some(reason))
            }
        }
    }

    fn run_inner(
        &self,
        entry: &ManifestEntry,
        trace: &mut TaskTrace,
        stats: &mut RunStats,
    ) -> Result<(), TaskFailure> {
        let source = open_media(&entry.media_path, entry.media_kind, &self.cfg.open_options())
            .map_err(|e| TaskFailure::Fail(e.to_string()))?;
        let t_total = source.frame_count();
        trace.media_id = source.id().to_string();
        trace.frame_count = t_total;
        let k_requested = self.cfg.effective_k(entry.media_kind);
        trace.k_requested = k_requested;

        let scoring_started = Instant::now();
        let selection = if self.cfg.uniform_baseline {
            self.uniform_selection(&source, k_requested, trace)?
        } else {
            self.scored_selection(entry, &source, k_requested, trace)?
        };
        stats.scoring_wall_ms += scoring_started.elapsed().as_millis() as u64;
        trace.k_effective = selection.k_effective;
        trace.tie_events = selection.tie_events;
        trace.selected_indices = selection.selected_indices();
        trace.spread = selection.spread;

        let answer_started = Instant::now();
        let answer = self.answer(entry, &source, &selection)?;
        stats.answer_wall_ms += answer_started.elapsed().as_millis() as u64;
        trace.metrics = task_metrics(&entry.task, &answer);
        trace.answer = Some(answer);
        Ok(())
    }

    /// Baseline mode: keep K uniformly spaced frames, no scoring at all.
    fn uniform_selection(
        &self,
        source: &MediaSource,
        k_requested: usize,
        trace: &mut TaskTrace,
    ) -> Result<SelectionResult, TaskFailure> {
        let indices = uniform_indices(source.frame_count(), k_requested)
            .map_err(|e| TaskFailure::Fail(e.to_string()))?;
        trace.n_sampled = indices.len();
        let selected: Vec<ScoredFrame> = indices
            .iter()
            .enumerate()
            .map(|(ordinal, &frame_index)| ScoredFrame {
                proposal: crate::media::FrameProposal {
                    media_id: source.id().to_string(),
                    frame_index,
                    ordinal,
                },
                score: 0.0,
                degraded: false,
            })
            .collect();
        let k_effective = selected.len();
        let mut selection = SelectionResult {
            selected,
            config: SelectionConfig::new(k_requested, k_effective),
            k_effective,
            tie_events: 0,
            spread: None,
        };
        selection.attach_spread(source.frame_count());
        Ok(selection)
    }

    fn scored_selection(
        &self,
        entry: &ManifestEntry,
        source: &MediaSource,
        k_requested: usize,
        trace: &mut TaskTrace,
    ) -> Result<SelectionResult, TaskFailure> {
        let t_total = source.frame_count();
        let n_target = self.cfg.effective_n(entry.media_kind).unwrap_or(t_total);
        let proposals =
            uniform_sample(source, n_target).map_err(|e| TaskFailure::Fail(e.to_string()))?;
        trace.n_sampled = proposals.len();
        let prompt =
            build_scoring_prompt(&entry.task).map_err(|e| TaskFailure::Fail(e.to_string()))?;
        let scored = self.score_all(source, &proposals, &prompt)?;

        let mut selection = select_top_k(&scored, SelectionConfig::new(k_requested, scored.len()))
            .map_err(|e| TaskFailure::Fail(e.to_string()))?;
        selection.attach_spread(t_total);
        let chosen: HashSet<usize> = selection.selected_indices().into_iter().collect();
        trace.frame_scores = scored
            .iter()
            .map(|f| FrameScoreRecord {
                frame_index: f.proposal.frame_index,
                score: f.score,
                degraded: f.degraded,
                selected: chosen.contains(&f.proposal.frame_index),
            })
            .collect();
        Ok(selection)
    }

    /// Score every proposal, cache first. Frames are claimed by a shared
    /// cursor and fanned out over `concurrency` workers; results are
    /// reassembled by slot, so the outcome is order-independent.
    fn score_all(
        &self,
        source: &MediaSource,
        proposals: &[crate::media::FrameProposal],
        prompt: &ScoringPrompt,
    ) -> Result<Vec<ScoredFrame>, TaskFailure> {
        let n = proposals.len();
        let workers = self.cfg.concurrency.min(n).max(1);
        let score_opts = ScoreOptions {
            mode: self.cfg.score_mode(),
            retry: self.cfg.retry.to_policy(),
        };
        let psha = prompt_sha(&prompt.rendered_prompt);
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);

        let score_one = |slot: usize| -> Result<ScoredFrame, FrameError> {
            let proposal = &proposals[slot];
            let key = self.cache.map(|_| {
                ScoreCache::key(
                    &self.cfg.scorer.model,
                    source.id(),
                    proposal.frame_index,
                    &psha,
                    self.cfg.raw_pa,
                )
            });
            if let (Some(cache), Some(key)) = (self.cache, &key) {
                if let Some(hit) = cache.get(key) {
                    self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(ScoredFrame {
                        proposal: proposal.clone(),
                        score: hit.score,
                        degraded: hit.degraded,
                    });
                }
                self.counters.cache_misses.fetch_add(1, Ordering::Relaxed);
            }
            let payload = source.payload(proposal.frame_index).map_err(FrameError::Media)?;
            let frame = score_frame(
                self.scorer,
                &self.cfg.scorer.model,
                proposal,
                &payload,
                prompt,
                &score_opts,
            )
            .map_err(FrameError::Scoring)?;
            if let (Some(cache), Some(key)) = (self.cache, &key) {
                cache
                    .put(key, &CacheEntry::now(frame.score, frame.degraded))
                    .map_err(FrameError::CacheWrite)?;
            }
            Ok(frame)
        };

        let (tx, rx) = mpsc::channel();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                let stop = &stop;
                let score_one = &score_one;
                scope.spawn(move || loop {
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                    let slot = next.fetch_add(1, Ordering::Relaxed);
                    if slot >= n {
                        break;
                    }
                    let outcome = score_one(slot);
                    if outcome.is_err() {
                        stop.store(true, Ordering::Relaxed);
                    }
                    if tx.send((slot, outcome)).is_err() {
                        break;
                    }
                });
            }
        });
        drop(tx);

        let mut slots: Vec<Option<Result<ScoredFrame, FrameError>>> =
            (0..n).map(|_| None).collect();
        for (slot, outcome) in rx {
            slots[slot] = Some(outcome);
        }
        // The first failure by frame order is the one reported, so the
        // message does not depend on scheduling.
        let mut frames = Vec::with_capacity(n);
        for slot in slots {
            match slot {
                Some(Ok(frame)) => frames.push(frame),
                Some(Err(e)) => return Err(self.classify_frame_error(&e)),
                None => {
                    return Err(TaskFailure::Fail(
                        "scoring stopped before covering all frames".to_string(),
                    ))
                }
            }
        }
        Ok(frames)
    }

    fn answer(
        &self,
        entry: &ManifestEntry,
        source: &MediaSource,
        selection: &SelectionResult,
    ) -> Result<Answer, TaskFailure> {
        let payloads: Result<Vec<_>, MediaError> = selection
            .selected
            .iter()
            .map(|f| source.payload(f.proposal.frame_index))
            .collect();
        let payloads = payloads.map_err(|e| TaskFailure::Fail(e.to_string()))?;
        let template = entry.prompt_template.as_deref().or(match entry.task.answer_type {
            AnswerType::Mcq => self.cfg.templates.mcq.as_deref(),
            AnswerType::Extractive => self.cfg.templates.extractive.as_deref(),
        });
        let request = build_answer_request(
            &self.cfg.answerer.model,
            &entry.task,
            selection,
            &payloads,
            self.cfg.detail.as_deref(),
            template,
        )
        .map_err(|e: AnsweringError| TaskFailure::Fail(e.to_string()))?;
        let response = chat_with_retry(self.answerer, &request, &self.cfg.retry.to_policy())
            .map_err(|e| self.classify_backend_error(&e, "answering"))?;
        let parsed = parse_answer(&response.content, &entry.task);
        Ok(Answer {
            raw: response.content,
            parsed,
        })
    }
}

/// Metrics for a completed answer; `None` when the task has no ground
/// truths to compare against.
fn task_metrics(task: &QueryTask, answer: &Answer) -> Option<QuestionMetrics> {
    if task.ground_truths.is_empty() {
        return None;
    }
    let truths = &task.ground_truths;
    Some(match task.answer_type {
        AnswerType::Mcq => QuestionMetrics {
            task_id: task.id.clone(),
            accuracy: mcq_accuracy(&answer.parsed, truths).ok(),
            exact_match: None,
            f1: None,
            anls: None,
        },
        AnswerType::Extractive => QuestionMetrics {
            task_id: task.id.clone(),
            accuracy: None,
            exact_match: exact_match(&answer.parsed, truths).ok(),
            f1: word_f1(&answer.parsed, truths).ok(),
            anls: anls_score(&answer.parsed, truths).ok(),
        },
    })
}

/// A failed task with ground truths still counts, as zero, in aggregates.
fn zero_metrics(task: &QueryTask) -> Option<QuestionMetrics> {
    if task.ground_truths.is_empty() {
        return None;
    }
    Some(match task.answer_type {
        AnswerType::Mcq => QuestionMetrics {
            task_id: task.id.clone(),
            accuracy: Some(0.0),
            exact_match: None,
            f1: None,
            anls: None,
        },
        AnswerType::Extractive => QuestionMetrics {
            task_id: task.id.clone(),
            accuracy: None,
            exact_match: Some(0.0),
            f1: Some(0.0),
            anls: Some(0.0),
        },
    })
}

pub fn run_pipeline_with_backends(
    cfg: &RunConfig,
    scorer: Arc<dyn ChatBackend>,
    answerer: Arc<dyn ChatBackend>,
) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let entries = load_manifest(&cfg.manifest)?;
    let cache = cfg
        .cache_dir
        .as_deref()
        .map(|dir| {
            ScoreCache::open(dir).map_err(|source| PipelineError::Cache {
                path: dir.to_path_buf(),
                source,
            })
        })
        .transpose()?;
    let scorer = CountingBackend::new(scorer);
    let answerer = CountingBackend::new(answerer);
    let counters = Counters {
        cache_hits: AtomicU64::new(0),
        cache_misses: AtomicU64::new(0),
    };
    let mut stats = RunStats {
        concurrency: cfg.concurrency,
        started_unix_ms: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        ..RunStats::default()
    };
    let runner = TaskRunner {
        cfg,
        scorer: &scorer,
        answerer: &answerer,
        cache: cache.as_ref(),
        counters: &counters,
    };

    let mut traces: Vec<TaskTrace> = Vec::with_capacity(entries.len());
    let mut abort_reason: Option<String> = None;
    for entry in &entries {
        if abort_reason.is_some() {
            traces.push(TaskTrace::not_run(
                &entry.task.id,
                &entry.media_path.display().to_string(),
                entry.media_kind,
            ));
            continue;
        }
        let (trace, abort) = runner.run(entry, &mut stats);
        traces.push(trace);
        if abort.is_some() {
            abort_reason = abort;
        }
    }

    stats.scoring_calls = scorer.attempts();
    stats.answer_calls = answerer.attempts();
    stats.cache_hits = counters.cache_hits.load(Ordering::Relaxed);
    stats.cache_misses = counters.cache_misses.load(Ordering::Relaxed);

    let mut failures = FailureCounts::default();
    for (trace, entry) in traces.iter().zip(&entries) {
        match trace.status {
            TaskStatus::Failed => failures.tasks_failed += 1,
            TaskStatus::NotRun => failures.tasks_not_run += 1,
            TaskStatus::Completed => {}
        }
        failures.degraded_frames += trace.frame_scores.iter().filter(|f| f.degraded).count();
        if entry.task.answer_type == AnswerType::Mcq
            && trace.answer.as_ref().is_some_and(|a| a.parsed == UNPARSED)
        {
            failures.unparsed_answers += 1;
        }
    }

    let per_question: Vec<QuestionMetrics> =
        traces.iter().filter_map(|t| t.metrics.clone()).collect();
    let report = RunReport {
        config: ConfigEcho {
            scorer_model: cfg.scorer.model.clone(),
            answerer_model: cfg.answerer.model.clone(),
            n_sampled: cfg.n_sampled,
            k_selected: cfg.k_selected,
            raw_pa: cfg.raw_pa,
            uniform_baseline: cfg.uniform_baseline,
        },
        aborted: abort_reason.is_some(),
        abort_reason,
        tasks: traces,
        metrics: MetricsReport::aggregate(per_question),
        failures,
        stats,
    };

    if let Some(out_dir) = &cfg.out_dir {
        write_outputs(&report, out_dir).map_err(|source| PipelineError::Output {
            path: out_dir.clone(),
            source,
        })?;
    }
    Ok(report)
}

fn write_outputs(report: &RunReport, out_dir: &std::path::Path) -> std::io::Result<()> {
    report.write_json(&out_dir.join("report.json"))?;
    let scores_dir = out_dir.join("scores");
    for trace in &report.tasks {
        if trace.frame_scores.is_empty() {
            continue;
        }
        std::fs::create_dir_all(&scores_dir)?;
        let name = format!("{}.csv", sanitize_task_id(&trace.task_id));
        std::fs::write(scores_dir.join(name), score_csv(trace))?;
    }
    Ok(())
}
