//! Parameter sweeps over the sampling or selection size.
//!
//! A sweep runs the full pipeline once per value, reusing one score cache
//! throughout. Cache keys are per frame index, so a dense sweep point pays
//! for scores once and sparser points that land on the same frames reuse
//! them; indices that only occur at one N are scored on demand. Output is
//! one row per value: aggregate metrics plus the mean selection spread,
//! ready to plot.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::ChatBackend;
use crate::harness::config::RunConfig;
use crate::harness::pipeline::{build_backends, run_pipeline_with_backends, PipelineError};
use crate::harness::report::{RunReport, TaskStatus};
use crate::metrics::MetricsReport;
use crate::selection::DiversityStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NSampled,
    KSelected,
}

impl SweepAxis {
    /// Short flag-style name used in CSV rows and output paths.
    pub fn short(&self) -> &'static str {
        match self {
            SweepAxis::NSampled => "n",
            SweepAxis::KSelected => "k",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n" | "n_sampled" => Ok(SweepAxis::NSampled),
            "k" | "k_selected" => Ok(SweepAxis::KSelected),
            other => Err(format!("unknown sweep axis `{other}` (expected n or k)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub metrics: MetricsReport,
    /// Mean selection spread over completed tasks, when any had one.
    pub mean_spread: Option<DiversityStats>,
    pub aborted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn mean_spread(report: &RunReport) -> Option<DiversityStats> {
    let spreads: Vec<DiversityStats> = report
        .tasks
        .iter()
        .filter(|t| t.status == TaskStatus::Completed)
        .filter_map(|t| t.spread)
        .collect();
    if spreads.is_empty() {
        return None;
    }
    let n = spreads.len() as f64;
    Some(DiversityStats {
        normalized_span: spreads.iter().map(|s| s.normalized_span).sum::<f64>() / n,
        mean_pairwise_gap: spreads.iter().map(|s| s.mean_pairwise_gap).sum::<f64>() / n,
    })
}

pub fn sweep(
    cfg: &RunConfig,
    axis: SweepAxis,
    values: &[usize],
) -> Result<SweepOutcome, PipelineError> {
    cfg.validate()?;
    let (scorer, answerer) = build_backends(cfg)?;
    sweep_with_backends(cfg, axis, values, scorer, answerer)
}

pub fn sweep_with_backends(
    cfg: &RunConfig,
    axis: SweepAxis,
    values: &[usize],
    scorer: Arc<dyn ChatBackend>,
    answerer: Arc<dyn ChatBackend>,
) -> Result<SweepOutcome, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::EmptySweep);
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut point = cfg.clone();
        match axis {
            SweepAxis::NSampled => point.n_sampled = Some(value),
            SweepAxis::KSelected => point.k_selected = Some(value),
        }
        point.out_dir = cfg
            .out_dir
            .as_ref()
            .map(|d| d.join(format!("{}{}", axis.short(), value)));
        let report = run_pipeline_with_backends(&point, scorer.clone(), answerer.clone())?;
        rows.push(SweepRow {
            value,
            mean_spread: mean_spread(&report),
            aborted: report.aborted,
            metrics: report.metrics,
        });
    }
    let outcome = SweepOutcome { axis, rows };
    if let Some(out_dir) = &cfg.out_dir {
        let path = out_dir.join("sweep.csv");
        std::fs::create_dir_all(out_dir).and_then(|_| std::fs::write(&path, sweep_csv(&outcome)))
            .map_err(|source| PipelineError::Output {
                path: out_dir.clone(),
                source,
            })?;
    }
    Ok(outcome)
}

/// Plot-ready CSV: one row per sweep value. Metrics that did not apply to
/// any task stay empty.
pub fn sweep_csv(outcome: &SweepOutcome) -> String {
    fn cell(v: Option<f64>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    let mut out = String::from(
        "axis,value,n_questions,accuracy,exact_match,f1,anls,mean_normalized_span,mean_pairwise_gap\n",
    );
    for row in &outcome.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            outcome.axis.short(),
            row.value,
            row.metrics.n_questions,
            cell(row.metrics.accuracy),
            cell(row.metrics.exact_match),
            cell(row.metrics.f1),
            cell(row.metrics.anls),
            cell(row.mean_spread.map(|s| s.normalized_span)),
            cell(row.mean_spread.map(|s| s.mean_pairwise_gap)),
        ));
    }
    out
}
