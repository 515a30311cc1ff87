//! Structured run reports and the human summary.
//!
//! A report is one schema-versioned JSON document per run. Every stage gets
//! an explicit status entry (never an omitted key), wall-clock timings live
//! only inside stage statuses, and [`RunReport::numeric_fields_equal`]
//! compares two reports with timings stripped.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io;
use crate::oodsplit::DetectorKind;
use crate::pipeline::RunConfig;
use crate::predictor::{EvalResult, ModelTag, SplitSide};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: RunConfig,
    pub stages: Vec<StageRecord>,
    pub split: Option<SplitSummary>,
    pub pretrain_trace: Option<Vec<f64>>,
    pub continual_trace: Option<Vec<f64>>,
    pub fisher: Option<FisherSummary>,
    pub replay: Option<ReplaySummary>,
    pub evals: Vec<EvalResult>,
    pub failure: Option<FailureRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StageStatus {
    /// Executed in this invocation.
    Completed { wall_secs: f64 },
    /// Skipped because its artifacts already existed.
    Resumed,
    /// Never reached.
    NotRun,
    Failed { message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSummary {
    pub detector: DetectorKind,
    pub threshold: f64,
    pub n_in: usize,
    pub n_ood: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FisherSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub parameters: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub n_in: usize,
    pub n_ood: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRecord {
    pub stage: String,
    pub message: String,
}

impl RunReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::save_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        io::load_json(path)
    }

    /// Equality over every numeric and structural field except wall-clock
    /// timings.
    pub fn numeric_fields_equal(&self, other: &RunReport) -> bool {
        let mut a = serde_json::to_value(self).expect("report serializes");
        let mut b = serde_json::to_value(other).expect("report serializes");
        strip_timings(&mut a);
        strip_timings(&mut b);
        a == b
    }
}

fn strip_timings(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("wall_secs");
            for v in map.values_mut() {
                strip_timings(v);
            }
        }
        serde_json::Value::Array(items) => {
            for v in items {
                strip_timings(v);
            }
        }
        _ => {}
    }
}

/// One-screen summary: dataset, split sizes, and the evaluation grid with
/// the pretrained and adapted models side by side.
pub fn render_summary(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "run seed {}", report.seed);
    let _ = writeln!(out, "dataset  {}", report.config.data.path.display());
    if let Some(split) = &report.split {
        let _ = writeln!(
            out,
            "split    {} (threshold {}): {} in / {} ood",
            split.detector, split.threshold, split.n_in, split.n_ood
        );
    }
    if let Some(trace) = &report.pretrain_trace {
        if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
            let _ = writeln!(out, "pretrain {} epochs, loss {:.4} -> {:.4}", trace.len(), first, last);
        }
    }
    if let Some(fisher) = &report.fisher {
        let _ = writeln!(
            out,
            "fisher   min {:.3e} mean {:.3e} max {:.3e} over {} parameters",
            fisher.min, fisher.mean, fisher.max, fisher.parameters
        );
    }
    if let Some(replay) = &report.replay {
        let _ = writeln!(out, "replay   {} in / {} ood rows", replay.n_in, replay.n_ood);
    }

    if !report.evals.is_empty() {
        let metric = report.evals[0].metric;
        let _ = writeln!(out, "\n{:<14} {:>12} {:>12}", format!("{metric}"), "in-holdout", "ood");
        for model in [ModelTag::BaselineMlp, ModelTag::Pretrained, ModelTag::Adapted] {
            let cell = |side: SplitSide| -> String {
                report
                    .evals
                    .iter()
                    .find(|e| e.model == model && e.split == side)
                    .map(|e| format!("{:.4}", e.value))
                    .unwrap_or_else(|| "-".into())
            };
            let _ = writeln!(
                out,
                "{:<14} {:>12} {:>12}",
                model.to_string(),
                cell(SplitSide::InHoldout),
                cell(SplitSide::Ood)
            );
        }
    }

    for record in &report.stages {
        if let StageStatus::Failed { message } = &record.status {
            let _ = writeln!(out, "\nFAILED at {}: {}", record.stage, message);
        }
    }
    out
}
