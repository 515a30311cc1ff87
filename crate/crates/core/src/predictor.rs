//! Downstream heads over frozen representations and the evaluation metrics.
//!
//! The default head is a single dense layer (a linear probe), which isolates
//! representation quality. The same trainer with hidden layers doubles as
//! the plain supervised comparator over raw features.

use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Targets, TaskKind};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, squared_error, Adam, Network};
use crate::{data, io, seed};

/// Head training settings. An empty `hidden` list is a linear probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden: Vec::new(),
            epochs: 200,
            batch_size: 256,
            lr: 1e-2,
            seed: 0,
        }
    }
}

/// A trained prediction head: latent (or raw) inputs to class logits or a
/// scalar target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Head {
    pub net: Network,
    pub task: TaskKind,
}

/// Model predictions: class ids or real values.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Predictions {
    pub fn classes(&self) -> Result<&[usize]> {
        match self {
            Predictions::Classes(c) => Ok(c),
            Predictions::Values(_) => Err(Error::Data("predictions are real-valued".into())),
        }
    }

    pub fn values(&self) -> Result<&[f64]> {
        match self {
            Predictions::Values(v) => Ok(v),
            Predictions::Classes(_) => Err(Error::Data("predictions are class-valued".into())),
        }
    }
}

/// Trains a head on fixed inputs (the encoder stays untouched).
pub fn train_head(
    inputs: &ArrayView2<f64>,
    targets: &Targets,
    task: TaskKind,
    cfg: &HeadConfig,
) -> Result<Head> {
    let n = inputs.nrows();
    if n < 2 {
        return Err(Error::Precondition("head training needs at least 2 rows".into()));
    }
    if targets.len() != n {
        return Err(Error::dim(n, targets.len(), "inputs vs targets"));
    }

    let out_dim = match (&task, targets) {
        (TaskKind::Classification { classes }, Targets::Classes(labels)) => {
            let mut seen = vec![false; *classes];
            for &l in labels {
                if l >= *classes {
                    return Err(Error::Data(format!("label {l} outside 0..{classes}")));
                }
                seen[l] = true;
            }
            if seen.iter().filter(|&&s| s).count() < 2 {
                return Err(Error::Data("head training needs at least two observed classes".into()));
            }
            *classes
        }
        (TaskKind::Regression, Targets::Values(_)) => 1,
        _ => return Err(Error::Data("task kind does not match target kind".into())),
    };

    let mut init_rng = seed::rng(cfg.seed, "head-init");
    let mut net = Network::mlp(inputs.ncols(), &cfg.hidden, out_dim, &mut init_rng)?;
    let mut opt = Adam::new(&net, cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(cfg.seed, "head-train");

    let value_column = match targets {
        Targets::Values(v) => Some(Array2::from_shape_vec((n, 1), v.clone()).expect("column shape")),
        Targets::Classes(_) => None,
    };

    for _ in 0..cfg.epochs {
        data::shuffle(&mut order, &mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let x = inputs.select(Axis(0), chunk);
            let cache = net.forward(&x)?;
            let up = match targets {
                Targets::Classes(labels) => {
                    let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                    cross_entropy(cache.output(), &y)?.1
                }
                Targets::Values(_) => {
                    let t = value_column
                        .as_ref()
                        .expect("regression targets")
                        .select(Axis(0), chunk);
                    squared_error(cache.output(), &t)?.1
                }
            };
            let bp = net.backward(&cache, &up)?;
            opt.step(&mut net, &bp.grads)?;
        }
    }
    Ok(Head { net, task })
}

/// Class argmax for classification, raw scalar for regression.
pub fn predict(head: &Head, inputs: &ArrayView2<f64>) -> Result<Predictions> {
    let out = head.net.infer(&inputs.to_owned())?;
    Ok(match head.task {
        TaskKind::Classification { .. } => {
            Predictions::Classes(crate::oodsplit::argmax_rows(&out))
        }
        TaskKind::Regression => Predictions::Values(out.column(0).to_vec()),
    })
}

const HEAD_CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct HeadCheckpoint {
    format_version: u32,
    head: Head,
}

impl Head {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::save_json(
            path,
            &HeadCheckpoint {
                format_version: HEAD_CHECKPOINT_VERSION,
                head: self.clone(),
            },
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt: HeadCheckpoint = io::load_json(path)?;
        if ckpt.format_version != HEAD_CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported head checkpoint version {}",
                ckpt.format_version
            )));
        }
        Ok(ckpt.head)
    }
}

/// F1 averaging convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Averaging {
    /// Positive class is 1.
    Binary,
    /// Unweighted mean of per-class F1 over classes present in predictions
    /// or labels.
    Macro,
}

/// Convention used throughout: binary for two-class tasks, macro otherwise.
pub fn f1_averaging_for(classes: usize) -> F1Averaging {
    if classes == 2 {
        F1Averaging::Binary
    } else {
        F1Averaging::Macro
    }
}

/// F1 score of predictions against labels.
pub fn f1(preds: &[usize], labels: &[usize], averaging: F1Averaging) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Data("f1 on empty input".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::dim(labels.len(), preds.len(), "predictions vs labels"));
    }
    match averaging {
        F1Averaging::Binary => Ok(binary_f1(preds, labels, 1)),
        F1Averaging::Macro => {
            let max_class = preds.iter().chain(labels).max().unwrap() + 1;
            let mut present = vec![false; max_class];
            for &v in preds.iter().chain(labels) {
                present[v] = true;
            }
            let mut total = 0.0;
            let mut count = 0usize;
            for (class, &p) in present.iter().enumerate() {
                if p {
                    total += binary_f1(preds, labels, class);
                    count += 1;
                }
            }
            Ok(total / count as f64)
        }
    }
}

fn binary_f1(preds: &[usize], labels: &[usize], positive: usize) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fnc = 0usize;
    for (&p, &l) in preds.iter().zip(labels) {
        match (p == positive, l == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnc += 1,
            (false, false) => {}
        }
    }
    if 2 * tp + fp + fnc == 0 {
        // The positive class appears nowhere: vacuously perfect.
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fnc) as f64
}

/// Root mean squared error.
pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Data("rmse on empty input".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::dim(targets.len(), preds.len(), "predictions vs targets"));
    }
    let mse = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64;
    Ok(mse.sqrt())
}

/// Which model produced an evaluation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    /// Probe over the pretrained encoder.
    Pretrained,
    /// Probe over the continually adapted encoder.
    Adapted,
    /// Plain supervised comparator on raw features.
    BaselineMlp,
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelTag::Pretrained => write!(f, "pretrained"),
            ModelTag::Adapted => write!(f, "adapted"),
            ModelTag::BaselineMlp => write!(f, "baseline-mlp"),
        }
    }
}

/// Which rows an evaluation ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitSide {
    InHoldout,
    Ood,
}

impl fmt::Display for SplitSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitSide::InHoldout => write!(f, "in-holdout"),
            SplitSide::Ood => write!(f, "ood"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    F1,
    Rmse,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::F1 => write!(f, "f1"),
            MetricKind::Rmse => write!(f, "rmse"),
        }
    }
}

/// One evaluation outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub metric: MetricKind,
    pub value: f64,
    pub n: usize,
    pub split: SplitSide,
    pub model: ModelTag,
}

/// Evaluates predictions against targets with the task's standard metric.
pub fn evaluate(
    preds: &Predictions,
    targets: &Targets,
    task: TaskKind,
    split: SplitSide,
    model: ModelTag,
) -> Result<EvalResult> {
    let (metric, value, n) = match (task, preds, targets) {
        (TaskKind::Classification { classes }, Predictions::Classes(p), Targets::Classes(l)) => {
            (MetricKind::F1, f1(p, l, f1_averaging_for(classes))?, p.len())
        }
        (TaskKind::Regression, Predictions::Values(p), Targets::Values(t)) => {
            (MetricKind::Rmse, rmse(p, t)?, p.len())
        }
        _ => return Err(Error::Data("prediction/target kinds do not match the task".into())),
    };
    Ok(EvalResult {
        metric,
        value,
        n,
        split,
        model,
    })
}
