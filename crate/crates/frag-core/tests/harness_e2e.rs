//! End-to-end pipeline runs against the mock backend: recovery of planted
//! frames, caching, determinism, failure isolation, baseline mode, sweeps.

mod common;

use std::sync::{Arc, Mutex};

use common::*;
use frag_core::backend::{
    BackendError, ChatBackend, ChatRequest, ChatResponse, ContentPart, MockBackend, MockFixture,
};
use frag_core::harness::{
    run_pipeline, run_pipeline_with_backends, sweep_with_backends, CountingBackend, RunConfig,
    RunReport, SweepAxis, TaskStatus,
};

#[test]
fn planted_frames_are_recovered_and_answered() {
    let dir = tempfile::tempdir().unwrap();
    let media = make_media(dir.path(), "clip", 100);
    let question = "What does the sign say?";
    let manifest = write_manifest(
        dir.path(),
        &[mcq_line("q1", &media, "video", question, &["stop", "yield"], &["A"])],
    );
    let mut fixture = MockFixture::default();
    plant_yes(&mut fixture, &media, &[3, 17], 0.95);
    fixture.set_answer(question, vec![3, 17], "A", "B");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let mut cfg = mock_config(manifest, fixture_path);
    cfg.n_sampled = Some(100);
    cfg.k_selected = Some(2);
    let report = run_pipeline(&cfg).unwrap();

    assert!(!report.aborted);
    assert_eq!(report.tasks.len(), 1);
    let trace = &report.tasks[0];
    assert_eq!(trace.status, TaskStatus::Completed);
    assert_eq!(trace.frame_count, 100);
    assert_eq!(trace.n_sampled, 100);
    assert_eq!(trace.selected_indices, vec![3, 17]);
    assert_eq!(trace.k_effective, 2);
    assert_eq!(trace.answer.as_ref().unwrap().parsed, "A");
    assert_eq!(report.metrics.accuracy, Some(1.0));
    assert_eq!(report.stats.scoring_calls, 100);
    assert_eq!(report.stats.answer_calls, 1);
    assert_eq!(report.failures.tasks_failed, 0);
}

#[test]
fn warm_cache_rerun_issues_zero_scoring_calls() {
    let dir = tempfile::tempdir().unwrap();
    let media = make_media(dir.path(), "clip", 24);
    let question = "Which animal appears?";
    let manifest = write_manifest(
        dir.path(),
        &[mcq_line("q1", &media, "video", question, &["cat", "dog"], &["B"])],
    );
    let mut fixture = MockFixture::default();
    plant_yes(&mut fixture, &media, &[5, 9, 13], 0.8);
    fixture.set_answer(question, vec![5, 9], "B", "A");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let mut cfg = mock_config(manifest, fixture_path);
    cfg.n_sampled = Some(24);
    cfg.k_selected = Some(3);
    cfg.cache_dir = Some(dir.path().join("cache"));

    let cold = run_pipeline(&cfg).unwrap();
    assert_eq!(cold.stats.scoring_calls, 24);
    assert_eq!(cold.stats.cache_misses, 24);
    assert_eq!(cold.stats.cache_hits, 0);

    let warm = run_pipeline(&cfg).unwrap();
    assert_eq!(warm.stats.scoring_calls, 0);
    assert_eq!(warm.stats.cache_hits, 24);
    assert_eq!(
        cold.normalized_for_comparison(),
        warm.normalized_for_comparison()
    );
}

#[test]
fn reports_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let media_a = make_media(dir.path(), "a", 60);
    let media_b = make_media(dir.path(), "b", 41);
    let qa = "What is the first digit shown?";
    let qb = "Name the city on the map.";
    let manifest = write_manifest(
        dir.path(),
        &[
            mcq_line("qa", &media_a, "video", qa, &["one", "two", "three"], &["C"]),
            extractive_line("qb", &media_b, "video", qb, &["lisbon"]),
        ],
    );
    let mut fixture = MockFixture::default();
    // Varied, partly tied landscape across both sources.
    for i in 0..60 {
        plant_yes(&mut fixture, &media_a, &[i], 0.05 + 0.9 * ((i * 37 % 60) as f64) / 60.0);
    }
    plant_yes(&mut fixture, &media_b, &[7, 21, 22, 35], 0.75);
    fixture.set_answer(qa, vec![], "C", "A");
    fixture.set_answer(qb, vec![7, 21], "Lisbon.", "Porto");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let mut reports: Vec<RunReport> = Vec::new();
    for concurrency in [1, 8, 32] {
        let mut cfg = mock_config(manifest.clone(), fixture_path.clone());
        cfg.n_sampled = Some(48);
        cfg.k_selected = Some(6);
        cfg.concurrency = concurrency;
        reports.push(run_pipeline(&cfg).unwrap());
    }
    let first = reports[0].normalized_for_comparison();
    for report in &reports[1..] {
        assert_eq!(first, report.normalized_for_comparison());
    }
    assert_eq!(reports[0].metrics.accuracy, Some(1.0));
    assert_eq!(reports[0].metrics.exact_match, Some(1.0));
}

#[test]
fn failed_task_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let good = make_media(dir.path(), "good", 12);
    let broken = make_media(dir.path(), "broken", 0);
    let also_good = make_media(dir.path(), "also-good", 12);
    let manifest = write_manifest(
        dir.path(),
        &[
            mcq_line("q1", &good, "video", "Q one?", &["x", "y"], &["A"]),
            mcq_line("q2", &broken, "video", "Q two?", &["x", "y"], &["A"]),
            mcq_line("q3", &also_good, "video", "Q three?", &["x", "y"], &["A"]),
        ],
    );
    let mut fixture = MockFixture::default();
    plant_yes(&mut fixture, &good, &[4], 0.9);
    plant_yes(&mut fixture, &also_good, &[8], 0.9);
    fixture.set_answer("Q one?", vec![4], "A", "B");
    fixture.set_answer("Q three?", vec![8], "A", "B");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let mut cfg = mock_config(manifest, fixture_path);
    cfg.k_selected = Some(1);
    cfg.n_sampled = Some(12);
    let report = run_pipeline(&cfg).unwrap();

    assert!(!report.aborted);
    assert_eq!(report.tasks[0].status, TaskStatus::Completed);
    assert_eq!(report.tasks[1].status, TaskStatus::Failed);
    assert!(report.tasks[1].error.as_ref().unwrap().contains("no frames"));
    assert_eq!(report.tasks[2].status, TaskStatus::Completed);
    assert_eq!(report.failures.tasks_failed, 1);
    assert_eq!(report.failures.tasks_not_run, 0);
    // The failed task still counts, as zero, in the aggregate.
    assert_eq!(report.metrics.n_questions, 3);
    let accuracy = report.metrics.accuracy.unwrap();
    assert!((accuracy - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn unreachable_backend_aborts_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let media = make_media(dir.path(), "clip", 8);
    let manifest = write_manifest(
        dir.path(),
        &[
            mcq_line("q1", &media, "video", "First?", &["x", "y"], &["A"]),
            mcq_line("q2", &media, "video", "Second?", &["x", "y"], &["A"]),
            mcq_line("q3", &media, "video", "Third?", &["x", "y"], &["A"]),
        ],
    );
    let mut cfg = RunConfig::default();
    cfg.manifest = manifest;
    cfg.scorer.base_url = "http://unused.invalid".into();
    cfg.scorer.model = "m".into();
    cfg.answerer = cfg.scorer.clone();
    cfg.retry = frag_core::harness::RetryConfig::immediate(1);
    cfg.concurrency = 4;

    let report = run_pipeline_with_backends(
        &cfg,
        Arc::new(UnreachableBackend),
        Arc::new(UnreachableBackend),
    )
    .unwrap();

    assert!(report.aborted);
    assert!(report.abort_reason.as_ref().unwrap().contains("unreachable"));
    assert_eq!(report.tasks[0].status, TaskStatus::Failed);
    assert_eq!(report.tasks[1].status, TaskStatus::NotRun);
    assert_eq!(report.tasks[2].status, TaskStatus::NotRun);
    assert_eq!(report.failures.tasks_not_run, 2);
    // Only the task that actually failed is scored (as zero).
    assert_eq!(report.metrics.n_questions, 1);
    assert_eq!(report.metrics.accuracy, Some(0.0));
}

/// Transport failure only for one media source, after other calls have
/// succeeded: that task fails, the run carries on.
struct FlakyMediaBackend {
    inner: MockBackend,
    marker: String,
}

impl ChatBackend for FlakyMediaBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        if let Some(ctx) = &request.context {
            if request.top_logprobs.is_some() && ctx.media_id.contains(&self.marker) {
                return Err(BackendError::Transport {
                    detail: "mid-run transport failure".into(),
                });
            }
        }
        self.inner.chat(request)
    }
}

#[test]
fn transport_failure_after_first_success_fails_only_that_task() {
    let dir = tempfile::tempdir().unwrap();
    let steady = make_media(dir.path(), "steady", 10);
    let flaky = make_media(dir.path(), "flaky", 10);
    let manifest = write_manifest(
        dir.path(),
        &[
            mcq_line("q1", &steady, "video", "One?", &["x", "y"], &["A"]),
            mcq_line("q2", &flaky, "video", "Two?", &["x", "y"], &["A"]),
            mcq_line("q3", &steady, "video", "Three?", &["x", "y"], &["A"]),
        ],
    );
    let mut fixture = MockFixture::default();
    plant_yes(&mut fixture, &steady, &[2], 0.9);
    fixture.set_answer("One?", vec![2], "A", "B");
    fixture.set_answer("Three?", vec![2], "A", "B");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let mut cfg = mock_config(manifest, fixture_path);
    cfg.n_sampled = Some(10);
    cfg.k_selected = Some(1);
    cfg.retry = frag_core::harness::RetryConfig::immediate(0);
    let scorer = Arc::new(FlakyMediaBackend {
        inner: MockBackend::new(fixture.clone()),
        marker: "flaky".into(),
    });
    let answerer = Arc::new(MockBackend::new(fixture));
    let report = run_pipeline_with_backends(&cfg, scorer, answerer).unwrap();

    assert!(!report.aborted);
    assert_eq!(report.tasks[0].status, TaskStatus::Completed);
    assert_eq!(report.tasks[1].status, TaskStatus::Failed);
    assert!(report.tasks[1].error.as_ref().unwrap().contains("transport"));
    assert_eq!(report.tasks[2].status, TaskStatus::Completed);
}

#[test]
fn uniform_baseline_skips_scoring_and_misses_planted_frames() {
    let dir = tempfile::tempdir().unwrap();
    let media = make_media(dir.path(), "clip", 100);
    let question = "What does the sign say?";
    let manifest = write_manifest(
        dir.path(),
        &[mcq_line("q1", &media, "video", question, &["stop", "yield"], &["A"])],
    );
    let mut fixture = MockFixture::default();
    plant_yes(&mut fixture, &media, &[3, 17], 0.95);
    fixture.set_answer(question, vec![3, 17], "A", "B");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let mut cfg = mock_config(manifest, fixture_path);
    cfg.k_selected = Some(2);
    cfg.uniform_baseline = true;
    let report = run_pipeline(&cfg).unwrap();

    let trace = &report.tasks[0];
    assert_eq!(trace.status, TaskStatus::Completed);
    // K evenly spaced frames out of 100: floor((j+0.5)*100/2).
    assert_eq!(trace.selected_indices, vec![25, 75]);
    assert!(trace.frame_scores.is_empty());
    assert_eq!(report.stats.scoring_calls, 0);
    assert_eq!(trace.answer.as_ref().unwrap().parsed, "B");
    assert_eq!(report.metrics.accuracy, Some(0.0));
}

#[test]
fn document_defaults_score_all_pages_and_keep_two() {
    let dir = tempfile::tempdir().unwrap();
    let doc = make_media(dir.path(), "doc", 6);
    let question = "What is the invoice total?";
    let manifest = write_manifest(
        dir.path(),
        &[extractive_line("d1", &doc, "document", question, &["42 eur"])],
    );
    let mut fixture = MockFixture::default();
    plant_yes(&mut fixture, &doc, &[1, 4], 0.9);
    fixture.set_answer(question, vec![1, 4], "42 EUR.", "unknown");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let cfg = mock_config(manifest, fixture_path);
    let report = run_pipeline(&cfg).unwrap();

    let trace = &report.tasks[0];
    assert_eq!(trace.n_sampled, 6);
    assert_eq!(trace.k_requested, 2);
    assert_eq!(trace.selected_indices, vec![1, 4]);
    assert_eq!(trace.answer.as_ref().unwrap().parsed, "42 EUR");
    assert_eq!(report.metrics.exact_match, Some(1.0));
    assert_eq!(report.metrics.anls, Some(1.0));
    assert_eq!(report.metrics.f1, Some(1.0));
}

#[test]
fn outputs_land_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let media = make_media(dir.path(), "clip", 10);
    let question = "Color of the door?";
    let manifest = write_manifest(
        dir.path(),
        &[mcq_line("q one", &media, "video", question, &["red", "blue"], &["A"])],
    );
    let mut fixture = MockFixture::default();
    plant_yes(&mut fixture, &media, &[6], 0.9);
    fixture.set_answer(question, vec![6], "A", "B");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let out_dir = dir.path().join("out");
    let mut cfg = mock_config(manifest, fixture_path);
    cfg.n_sampled = Some(10);
    cfg.k_selected = Some(1);
    cfg.out_dir = Some(out_dir.clone());
    let report = run_pipeline(&cfg).unwrap();

    let loaded = RunReport::from_json_file(&out_dir.join("report.json")).unwrap();
    assert_eq!(
        report.normalized_for_comparison(),
        loaded.normalized_for_comparison()
    );
    let csv = std::fs::read_to_string(out_dir.join("scores/q_one.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "frame_index,score,selected");
    assert_eq!(lines.clone().count(), 10);
    assert!(lines.any(|l| l.starts_with("6,") && l.ends_with(",1")));
}

#[test]
fn sweep_over_k_produces_nested_selections() {
    let dir = tempfile::tempdir().unwrap();
    let media = make_media(dir.path(), "clip", 32);
    let question = "Which frame shows the goal?";
    let manifest = write_manifest(
        dir.path(),
        &[mcq_line("q1", &media, "video", question, &["early", "late"], &["A"])],
    );
    let mut fixture = MockFixture::default();
    for i in 0..32 {
        // Distinct scores in a scrambled order.
        plant_yes(&mut fixture, &media, &[i], 0.04 + 0.9 * ((i * 11 % 32) as f64) / 32.0);
    }
    fixture.set_answer(question, vec![], "A", "B");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let out_dir = dir.path().join("out");
    let mut cfg = mock_config(manifest, fixture_path);
    cfg.n_sampled = Some(32);
    cfg.out_dir = Some(out_dir.clone());
    let (scorer, answerer) = mock_backends(&fixture);
    let outcome = sweep_with_backends(&cfg, SweepAxis::KSelected, &[1, 2, 4], scorer, answerer)
        .unwrap();

    assert_eq!(outcome.rows.len(), 3);
    assert!(outcome.rows.iter().all(|r| !r.aborted));
    let selections: Vec<std::collections::HashSet<usize>> = [1usize, 2, 4]
        .iter()
        .map(|k| {
            let report =
                RunReport::from_json_file(&out_dir.join(format!("k{k}/report.json"))).unwrap();
            report.tasks[0].selected_indices.iter().copied().collect()
        })
        .collect();
    assert!(selections[0].is_subset(&selections[1]));
    assert!(selections[1].is_subset(&selections[2]));

    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(1).unwrap().starts_with("k,1,"));
}

#[test]
fn sweep_over_n_reuses_cached_scores() {
    let dir = tempfile::tempdir().unwrap();
    let media = make_media(dir.path(), "clip", 8);
    let question = "Anything red?";
    let manifest = write_manifest(
        dir.path(),
        &[mcq_line("q1", &media, "video", question, &["yes", "no"], &["A"])],
    );
    let mut fixture = MockFixture::default();
    plant_yes(&mut fixture, &media, &[3], 0.9);
    fixture.set_answer(question, vec![], "A", "B");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let mut cfg = mock_config(manifest, fixture_path);
    cfg.k_selected = Some(2);
    cfg.cache_dir = Some(dir.path().join("cache"));

    let counting = Arc::new(CountingBackend::new(Arc::new(MockBackend::new(
        fixture.clone(),
    ))));
    let answerer: Arc<dyn ChatBackend> = Arc::new(MockBackend::new(fixture));
    let outcome = sweep_with_backends(
        &cfg,
        SweepAxis::NSampled,
        &[4, 8],
        counting.clone(),
        answerer,
    )
    .unwrap();

    assert_eq!(outcome.rows.len(), 2);
    // N=4 scores frames {1,3,5,7}; N=8 adds only the remaining four.
    assert_eq!(counting.attempts(), 8);
}

/// Records the text part of every answer request it forwards.
struct RecordingBackend {
    inner: MockBackend,
    texts: Mutex<Vec<String>>,
}

impl ChatBackend for RecordingBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        if request.top_logprobs.is_none() {
            for part in &request.parts {
                if let ContentPart::Text(text) = part {
                    self.texts.lock().unwrap().push(text.clone());
                }
            }
        }
        self.inner.chat(request)
    }
}

#[test]
fn prompt_template_overrides_apply_in_priority_order() {
    let dir = tempfile::tempdir().unwrap();
    let media = make_media(dir.path(), "clip", 4);
    let q1 = "Own template?";
    let q2 = "Config template?";
    let mut line1 = mcq_line("q1", &media, "video", q1, &["x", "y"], &["A"]);
    line1["prompt_template"] =
        serde_json::Value::String("TASK: {question} OPTIONS: {options}".into());
    let manifest = write_manifest(
        dir.path(),
        &[line1, mcq_line("q2", &media, "video", q2, &["x", "y"], &["A"])],
    );
    let mut fixture = MockFixture::default();
    plant_yes(&mut fixture, &media, &[1], 0.9);
    fixture.set_answer(q1, vec![], "A", "B");
    fixture.set_answer(q2, vec![], "A", "B");
    let fixture_path = write_fixture(dir.path(), &fixture);

    let mut cfg = mock_config(manifest, fixture_path);
    cfg.n_sampled = Some(4);
    cfg.k_selected = Some(1);
    cfg.templates.mcq = Some("CFG: {question}".into());

    let recorder = Arc::new(RecordingBackend {
        inner: MockBackend::new(fixture.clone()),
        texts: Mutex::new(vec![]),
    });
    let scorer: Arc<dyn ChatBackend> = Arc::new(MockBackend::new(fixture));
    let report = run_pipeline_with_backends(&cfg, scorer, recorder.clone()).unwrap();

    assert_eq!(report.failures.tasks_failed, 0);
    let texts = recorder.texts.lock().unwrap();
    assert_eq!(texts.len(), 2);
    assert_eq!(texts[0], "TASK: Own template? OPTIONS: A. x\nB. y");
    assert_eq!(texts[1], "CFG: Config template?");
}
