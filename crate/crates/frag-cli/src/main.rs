//! `frag`: run frame-selection benchmarks from the command line.
//!
//! Three subcommands: `run` executes a manifest and writes a run report,
//! `sweep` repeats the run across values of one parameter, `score-dump`
//! prints the per-frame score table of one task from an existing report.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use frag_core::harness::{run_pipeline, score_csv, sweep, RunConfig, RunReport, SweepAxis};

#[derive(Parser)]
#[command(
    name = "frag",
    version,
    about = "Answer questions over long videos and documents by scoring frames and keeping the top K",
    after_help = "The backend bearer credential is read from the FRAG_API_KEY environment variable."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score, select, and answer every task in a manifest.
    Run(RunArgs),
    /// Run once per value of one parameter and tabulate the metrics.
    Sweep(SweepArgs),
    /// Print the per-frame score CSV for one task from a run report.
    ScoreDump(ScoreDumpArgs),
}

/// Flags shared by `run` and `sweep`; each one overrides the config file.
#[derive(Args)]
struct SharedArgs {
    /// TOML run config; relative paths in it resolve against its directory.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,

    /// Task manifest: JSONL, one question per line.
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,

    /// Frames kept after scoring.
    #[arg(long, value_name = "N")]
    k: Option<usize>,

    /// Frames sampled and scored per task.
    #[arg(long, value_name = "N")]
    n: Option<usize>,

    /// Model served by the scoring endpoint.
    #[arg(long, value_name = "MODEL")]
    scorer_model: Option<String>,

    /// Model served by the answering endpoint.
    #[arg(long, value_name = "MODEL")]
    answerer_model: Option<String>,

    /// Offline mock fixture standing in for both backends.
    #[arg(long, value_name = "FIXTURE")]
    mock: Option<PathBuf>,

    /// Score cache directory.
    #[arg(long, value_name = "DIR")]
    cache: Option<PathBuf>,

    /// Where report.json and score CSVs are written.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Concurrent frame-scoring workers.
    #[arg(long, value_name = "N")]
    concurrency: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    shared: SharedArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    shared: SharedArgs,

    /// Swept parameter: n (sampled frames) or k (selected frames).
    #[arg(long, value_name = "AXIS")]
    axis: String,

    /// Values to sweep, comma separated.
    #[arg(long, value_name = "V,V,...", value_delimiter = ',', required = true)]
    values: Vec<usize>,
}

#[derive(Args)]
struct ScoreDumpArgs {
    /// Run report to read.
    #[arg(long, value_name = "FILE", default_value = "report.json")]
    report: PathBuf,

    /// Task id whose frame scores to dump.
    #[arg(long, value_name = "ID")]
    task: String,

    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::ScoreDump(args) => cmd_score_dump(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args.shared)?;
    let report = run_pipeline(&cfg).map_err(|e| anyhow!("{e}"))?;
    print_summary(&report, cfg.out_dir.as_deref());
    if report.aborted {
        bail!(
            "run aborted: {}",
            report.abort_reason.as_deref().unwrap_or("unknown reason")
        );
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let axis = SweepAxis::from_str(&args.axis).map_err(|e| anyhow!(e))?;
    let cfg = load_config(&args.shared)?;
    let outcome = sweep(&cfg, axis, &args.values).map_err(|e| anyhow!("{e}"))?;
    for row in &outcome.rows {
        let metrics = [
            ("accuracy", row.metrics.accuracy),
            ("exact_match", row.metrics.exact_match),
            ("f1", row.metrics.f1),
            ("anls", row.metrics.anls),
        ]
        .iter()
        .filter_map(|(name, v)| v.map(|v| format!("{name} {v:.4}")))
        .collect::<Vec<_>>()
        .join(", ");
        let metrics = if metrics.is_empty() { "no metrics".to_string() } else { metrics };
        let span = row
            .mean_spread
            .map(|s| format!(", mean span {:.4}", s.normalized_span))
            .unwrap_or_default();
        let flag = if row.aborted { " [aborted]" } else { "" };
        println!("{}={}: {metrics}{span}{flag}", axis.short(), row.value);
    }
    if let Some(out_dir) = &cfg.out_dir {
        println!("sweep table: {}", out_dir.join("sweep.csv").display());
    }
    if outcome.rows.iter().any(|r| r.aborted) {
        bail!("one or more sweep runs aborted");
    }
    Ok(())
}

fn cmd_score_dump(args: ScoreDumpArgs) -> Result<()> {
    let report = RunReport::from_json_file(&args.report).map_err(|e| anyhow!("{e}"))?;
    let trace = report.task(&args.task).ok_or_else(|| {
        anyhow!(
            "no task `{}` in {}; it has: {}",
            args.task,
            args.report.display(),
            report
                .tasks
                .iter()
                .map(|t| t.task_id.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )
    })?;
    let csv = score_csv(trace);
    match &args.out {
        Some(path) => fs::write(path, csv)
            .with_context(|| format!("failed to write {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// Parse the TOML config, rebase its relative paths onto the config file's
/// directory, then apply the command-line overrides verbatim.
fn load_config(shared: &SharedArgs) -> Result<RunConfig> {
    let text = fs::read_to_string(&shared.config)
        .with_context(|| format!("failed to read config {}", shared.config.display()))?;
    let mut cfg: RunConfig = toml::from_str(&text)
        .with_context(|| format!("invalid config {}", shared.config.display()))?;
    if let Some(base) = shared.config.parent().filter(|p| !p.as_os_str().is_empty()) {
        rebase(base, &mut cfg.manifest);
        for path in [
            cfg.cache_dir.as_mut(),
            cfg.out_dir.as_mut(),
            cfg.mock_fixture.as_mut(),
            cfg.decode_root.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            rebase(base, path);
        }
    }
    apply_overrides(&mut cfg, shared);
    Ok(cfg)
}

fn rebase(base: &Path, path: &mut PathBuf) {
    if !path.as_os_str().is_empty() && path.is_relative() {
        *path = base.join(&*path);
    }
}

fn apply_overrides(cfg: &mut RunConfig, shared: &SharedArgs) {
    if let Some(manifest) = &shared.manifest {
        cfg.manifest = manifest.clone();
    }
    if let Some(k) = shared.k {
        cfg.k_selected = Some(k);
    }
    if let Some(n) = shared.n {
        cfg.n_sampled = Some(n);
    }
    if let Some(model) = &shared.scorer_model {
        cfg.scorer.model = model.clone();
    }
    if let Some(model) = &shared.answerer_model {
        cfg.answerer.model = model.clone();
    }
    if let Some(mock) = &shared.mock {
        cfg.mock_fixture = Some(mock.clone());
    }
    if let Some(cache) = &shared.cache {
        cfg.cache_dir = Some(cache.clone());
    }
    if let Some(out) = &shared.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(concurrency) = shared.concurrency {
        cfg.concurrency = concurrency;
    }
}

fn print_summary(report: &RunReport, out_dir: Option<&Path>) {
    let completed =
        report.tasks.len() - report.failures.tasks_failed - report.failures.tasks_not_run;
    println!(
        "tasks: {completed} completed, {} failed, {} not run",
        report.failures.tasks_failed, report.failures.tasks_not_run
    );
    for (name, value) in [
        ("accuracy", report.metrics.accuracy),
        ("exact_match", report.metrics.exact_match),
        ("f1", report.metrics.f1),
        ("anls", report.metrics.anls),
    ] {
        if let Some(value) = value {
            println!("{name}: {value:.4}");
        }
    }
    if report.failures.degraded_frames > 0 || report.failures.unparsed_answers > 0 {
        println!(
            "degraded frames: {}, unparsed answers: {}",
            report.failures.degraded_frames, report.failures.unparsed_answers
        );
    }
    println!(
        "scoring: {} calls, {} cache hits, {} ms; answering: {} calls, {} ms",
        report.stats.scoring_calls,
        report.stats.cache_hits,
        report.stats.scoring_wall_ms,
        report.stats.answer_calls,
        report.stats.answer_wall_ms
    );
    if let Some(out_dir) = out_dir {
        println!("report: {}", out_dir.join("report.json").display());
    }
}
