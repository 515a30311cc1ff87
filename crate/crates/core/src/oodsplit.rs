//! Detector-based splitting of a dataset into in-distribution and OOD parts.
//!
//! A proxy classifier supplies activation vectors; one of two detectors then
//! flags rows:
//!
//! - **OpenMax**: per-class mean activation vectors with Weibull tails fitted
//!   by maximum likelihood on the largest distances of correctly classified
//!   training rows; activations are revised by CDF weights and the shaved
//!   probability mass becomes an "unknown" coordinate.
//! - **Temperature-scaled max-softmax**: a scalar temperature fitted by
//!   minimizing validation NLL; rows whose max softmax confidence falls below
//!   a percentile threshold are flagged.
//!
//! Regression datasets get quantile-binned pseudo-classes so the class-based
//! detectors apply.

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, softmax, Adam, Network};
use crate::{data, io, seed};

/// Which activation vectors feed the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationSource {
    /// Final-layer logits (the classical choice).
    Logits,
    /// Activations of the layer before the output layer.
    Penultimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    #[serde(rename = "openmax")]
    OpenMax,
    TemperatureScaling,
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorKind::OpenMax => write!(f, "openmax"),
            DetectorKind::TemperatureScaling => write!(f, "temperature-scaling"),
        }
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "openmax" => Ok(DetectorKind::OpenMax),
            "temperature-scaling" => Ok(DetectorKind::TemperatureScaling),
            other => Err(Error::Config(format!("unknown detector `{other}`"))),
        }
    }
}

/// Proxy classifier settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProxyConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub val_fraction: f64,
    /// Pseudo-class count for regression targets.
    pub quantile_bins: usize,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            hidden: vec![64],
            epochs: 30,
            batch_size: 128,
            lr: 1e-3,
            val_fraction: 0.2,
            quantile_bins: 10,
        }
    }
}

/// Cross-entropy-trained scoring network with its train/validation split and
/// the (possibly pseudo) class labels it was trained on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProxyClassifier {
    pub net: Network,
    pub classes: usize,
    pub labels: Vec<usize>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl ProxyClassifier {
    pub fn logits(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.net.infer(&features.to_owned())
    }

    /// Activations of the layer feeding the output layer.
    pub fn penultimate(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let layers = self.net.layers();
        let mut current = features.to_owned();
        for layer in &layers[..layers.len() - 1] {
            let z = current.dot(&layer.weight.t()) + &layer.bias;
            current = match layer.activation {
                crate::nn::Activation::ReLU => z.mapv(|v| v.max(0.0)),
                crate::nn::Activation::Identity => z,
            };
        }
        Ok(current)
    }

    pub fn activations(&self, features: &ArrayView2<f64>, source: ActivationSource) -> Result<Array2<f64>> {
        match source {
            ActivationSource::Logits => self.logits(features),
            ActivationSource::Penultimate => self.penultimate(features),
        }
    }
}

/// Argmax per row; ties resolve to the lowest index.
pub fn argmax_rows(scores: &Array2<f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

/// Quantile-bin pseudo-classes for regression targets.
pub fn quantile_pseudo_labels(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(Error::Data("cannot bin an empty target vector".into()));
    }
    if bins < 2 {
        return Err(Error::Config("need at least 2 quantile bins".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..bins)
        .map(|j| sorted[(j * n / bins).min(n - 1)])
        .collect();
    edges.dedup();
    Ok(values
        .iter()
        .map(|&v| edges.partition_point(|&e| e < v))
        .collect())
}

/// Trains the proxy classifier, holding out a validation fraction for
/// calibration and threshold selection.
pub fn train_proxy(ds: &Dataset, cfg: &ProxyConfig, proxy_seed: u64) -> Result<ProxyClassifier> {
    if ds.n() == 0 {
        return Err(Error::Data("cannot train a proxy on an empty dataset".into()));
    }
    let labels: Vec<usize> = match ds.task() {
        TaskKind::Classification { .. } => ds.labels()?.to_vec(),
        TaskKind::Regression => quantile_pseudo_labels(ds.values()?, cfg.quantile_bins)?,
    };
    let classes = labels.iter().max().unwrap() + 1;
    let distinct = {
        let mut seen = vec![false; classes];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::Data("proxy training needs at least two classes".into()));
    }

    let mut split_rng = seed::rng(proxy_seed, "proxy-split");
    let (train_indices, val_indices) = data::split_indices(ds.n(), cfg.val_fraction, &mut split_rng);
    if train_indices.is_empty() {
        return Err(Error::Config("validation fraction leaves no training rows".into()));
    }

    let mut init_rng = seed::rng(proxy_seed, "proxy-init");
    let mut net = Network::mlp(ds.dim(), &cfg.hidden, classes, &mut init_rng)?;
    let mut opt = Adam::new(&net, cfg.lr);
    let mut train_rng = seed::rng(proxy_seed, "proxy-train");
    let features = ds.features();

    let mut order = train_indices.clone();
    for _ in 0..cfg.epochs {
        data::shuffle(&mut order, &mut train_rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let x = features.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let cache = net.forward(&x)?;
            let (_, up) = cross_entropy(cache.output(), &y)?;
            let bp = net.backward(&cache, &up)?;
            opt.step(&mut net, &bp.grads)?;
        }
    }

    Ok(ProxyClassifier {
        net,
        classes,
        labels,
        train_indices,
        val_indices,
    })
}

/// Classification accuracy of a network on the given rows.
pub fn accuracy(net: &Network, features: &ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let logits = net.infer(&features.to_owned())?;
    let preds = argmax_rows(&logits);
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

/// Weibull tail over distances-minus-shift.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeibullTail {
    pub shape: f64,
    pub scale: f64,
    pub shift: f64,
}

impl WeibullTail {
    pub fn cdf(&self, distance: f64) -> f64 {
        let r = (distance - self.shift).max(0.0);
        1.0 - (-(r / self.scale).powf(self.shape)).exp()
    }
}

/// Maximum-likelihood Weibull fit via Newton iteration on the shape with a
/// moment-based start. Samples must be strictly positive.
pub fn weibull_mle(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Data("weibull fit needs at least 2 samples".into()));
    }
    if samples.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
        return Err(Error::Data("weibull samples must be positive and finite".into()));
    }
    // Shape is invariant to rescaling; normalizing by the max keeps x^k from
    // overflowing at large shapes.
    let max = samples.iter().cloned().fold(f64::MIN, f64::max);
    let xs: Vec<f64> = samples.iter().map(|&x| x / max).collect();
    let lns: Vec<f64> = xs.iter().map(|&x| x.ln()).collect();
    let n = xs.len() as f64;
    let mean_ln = lns.iter().sum::<f64>() / n;

    let var_ln = lns.iter().map(|l| (l - mean_ln) * (l - mean_ln)).sum::<f64>() / n;
    let std_ln = var_ln.sqrt();
    let mut k = if std_ln > 1e-12 {
        (std::f64::consts::PI / 6f64.sqrt()) / std_ln
    } else {
        // Nearly identical samples: a spike, i.e. a very large shape.
        1e3
    };
    k = k.clamp(1e-3, 1e3);

    for _ in 0..200 {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (&x, &l) in xs.iter().zip(&lns) {
            let xk = x.powf(k);
            s0 += xk;
            s1 += xk * l;
            s2 += xk * l * l;
        }
        let f = s1 / s0 - 1.0 / k - mean_ln;
        let fp = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k);
        let next = (k - f / fp).clamp(1e-3, 1e3);
        if (next - k).abs() < 1e-12 || f.abs() < 1e-12 {
            k = next;
            break;
        }
        k = next;
    }
    let s0: f64 = xs.iter().map(|&x| x.powf(k)).sum();
    let scale = (s0 / n).powf(1.0 / k) * max;
    Ok((k, scale))
}

/// Per-class mean activation vectors with Weibull tails over the largest
/// MAV distances of correctly classified samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenMaxModel {
    pub mavs: Array2<f64>,
    pub tails: Vec<WeibullTail>,
    pub tail_size: usize,
    pub alpha: usize,
}

/// Fits the OpenMax model from training activations.
///
/// Classes with fewer than `tail_size` correct samples fit on everything
/// available; a class with zero correct samples is a hard error.
pub fn fit_openmax(
    activations: &Array2<f64>,
    labels: &[usize],
    predictions: &[usize],
    classes: usize,
    tail_size: usize,
    alpha: usize,
) -> Result<OpenMaxModel> {
    if activations.nrows() != labels.len() || labels.len() != predictions.len() {
        return Err(Error::dim(activations.nrows(), labels.len(), "activations vs labels/predictions"));
    }
    if tail_size == 0 {
        return Err(Error::Config("tail size must be positive".into()));
    }
    let dim = activations.ncols();
    let mut mavs = Array2::zeros((classes, dim));
    let mut tails = Vec::with_capacity(classes);

    for class in 0..classes {
        let correct: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i] == class && predictions[i] == class)
            .collect();
        if correct.is_empty() {
            return Err(Error::Data(format!(
                "class {class} has no correctly classified samples to model"
            )));
        }
        let mut mav = Array1::<f64>::zeros(dim);
        for &i in &correct {
            mav += &activations.row(i);
        }
        mav /= correct.len() as f64;

        let mut distances: Vec<f64> = correct
            .iter()
            .map(|&i| euclidean(&activations.row(i), &mav.view()))
            .collect();
        distances.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if distances.len() < tail_size {
            log::warn!(
                "class {class}: only {} correct samples for a tail of {tail_size}; fitting on all",
                distances.len()
            );
        }
        distances.truncate(tail_size);

        let shift = distances.iter().cloned().fold(f64::INFINITY, f64::min);
        let residuals: Vec<f64> = distances
            .iter()
            .map(|d| d - shift)
            .filter(|&r| r > 0.0)
            .collect();
        let tail = if residuals.len() < 2 {
            // Too few distinct distances for a likelihood fit: fall back to a
            // unit-shape tail at the observed scale.
            let scale = residuals.first().copied().unwrap_or(0.0).max(1e-12);
            WeibullTail { shape: 1.0, scale, shift }
        } else {
            let (shape, scale) = weibull_mle(&residuals)?;
            WeibullTail { shape, scale, shift }
        };
        mavs.row_mut(class).assign(&mav);
        tails.push(tail);
    }
    Ok(OpenMaxModel {
        mavs,
        tails,
        tail_size,
        alpha: alpha.clamp(1, classes),
    })
}

fn euclidean(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Probability vector over the known classes plus a trailing "unknown"
/// coordinate.
///
/// The top-α classes (by activation) are revised by rank-weighted Weibull
/// CDF values of their MAV distances; the shaved softmax mass is routed to
/// the unknown coordinate, so the output always sums to one and an
/// unrevised input reduces exactly to plain softmax with zero unknown mass.
pub fn openmax_probs(model: &OpenMaxModel, activation: &ArrayView1<f64>) -> Result<Array1<f64>> {
    let k = model.mavs.nrows();
    if activation.len() != model.mavs.ncols() {
        return Err(Error::dim(model.mavs.ncols(), activation.len(), "activation width"));
    }

    let mut ranks: Vec<usize> = (0..k).collect();
    ranks.sort_by(|&a, &b| {
        activation[b]
            .partial_cmp(&activation[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut weights = vec![0.0; k];
    for (rank0, &class) in ranks.iter().take(model.alpha).enumerate() {
        let rank_weight = (model.alpha - rank0) as f64 / model.alpha as f64;
        let distance = euclidean(activation, &model.mavs.row(class));
        weights[class] = rank_weight * model.tails[class].cdf(distance);
    }

    let probs = softmax(&activation.to_owned().insert_axis(Axis(0)));
    let mut out = Array1::zeros(k + 1);
    let mut unknown = 0.0;
    for c in 0..k {
        let p = probs[[0, c]];
        out[c] = p * (1.0 - weights[c]);
        unknown += p * weights[c];
    }
    out[k] = unknown;
    Ok(out)
}

/// Fitted softmax temperature.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub t: f64,
}

fn nll(logits: &Array2<f64>, labels: &[usize], t: f64) -> f64 {
    let scaled = logits.mapv(|v| v / t);
    let probs = softmax(&scaled);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        loss -= probs[[i, label]].max(f64::MIN_POSITIVE).ln();
    }
    loss / labels.len() as f64
}

/// Minimizes validation NLL of `softmax(logits / T)` by golden-section
/// search on `ln T` over `[−4, 4]`.
pub fn fit_temperature(logits: &Array2<f64>, labels: &[usize]) -> Result<TemperatureModel> {
    if logits.nrows() != labels.len() {
        return Err(Error::dim(logits.nrows(), labels.len(), "logits vs labels"));
    }
    if labels.is_empty() {
        return Err(Error::Data("temperature fit needs validation rows".into()));
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::Data("degenerate single-label validation set".into()));
    }

    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-4.0f64, 4.0f64);
    let mut c = hi - golden * (hi - lo);
    let mut d = lo + golden * (hi - lo);
    let mut fc = nll(logits, labels, c.exp());
    let mut fd = nll(logits, labels, d.exp());
    for _ in 0..120 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - golden * (hi - lo);
            fc = nll(logits, labels, c.exp());
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + golden * (hi - lo);
            fd = nll(logits, labels, d.exp());
        }
    }
    Ok(TemperatureModel {
        t: ((lo + hi) / 2.0).exp(),
    })
}

/// Max softmax probability at temperature `t`; lies in `[1/K, 1)`.
pub fn msp_confidence(logits: &ArrayView1<f64>, t: f64) -> f64 {
    let scaled = logits.mapv(|v| v / t).insert_axis(Axis(0));
    let probs = softmax(&scaled);
    probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Low-confidence flags for the max-softmax rule: a row is OOD iff its
/// confidence falls strictly below `delta`.
pub fn msp_flags(confidences: &[f64], delta: f64) -> Vec<bool> {
    confidences.iter().map(|&c| c < delta).collect()
}

/// Disjoint index partition of a dataset into in-distribution and OOD rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSplit {
    pub in_indices: Vec<usize>,
    pub ood_indices: Vec<usize>,
    pub detector: DetectorKind,
    pub threshold: f64,
}

impl OodSplit {
    pub fn n(&self) -> usize {
        self.in_indices.len() + self.ood_indices.len()
    }
}

/// Split settings; `seed` drives the proxy's internal randomness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    pub detector: DetectorKind,
    pub proxy: ProxyConfig,
    /// Weibull tail size η.
    pub tail_size: usize,
    /// Number of top classes OpenMax revises (clamped to the class count).
    pub alpha: usize,
    /// OpenMax unknown-mass threshold; 0 selects the argmax rule.
    pub epsilon: f64,
    /// Percentile of validation confidences that sets the MSP threshold δ.
    pub delta_percentile: f64,
    pub source: ActivationSource,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            detector: DetectorKind::OpenMax,
            proxy: ProxyConfig::default(),
            tail_size: 20,
            alpha: 3,
            epsilon: 0.0,
            delta_percentile: 5.0,
            source: ActivationSource::Logits,
            seed: 0,
        }
    }
}

/// Splits every row of `ds` into in-distribution or OOD.
///
/// OpenMax flags a row when the unknown coordinate wins the argmax (or
/// exceeds `epsilon` when set); the MSP rule flags rows whose temperature-
/// scaled confidence falls below the δ-percentile of validation confidences.
/// The two index lists are disjoint and exhaustive by construction.
pub fn split_dataset(ds: &Dataset, cfg: &SplitConfig) -> Result<OodSplit> {
    let proxy = train_proxy(ds, &cfg.proxy, seed::derive(cfg.seed, "proxy"))?;
    split_with_proxy(ds, &proxy, cfg)
}

/// Split using an already-trained proxy (the proxy must have been trained on
/// `ds`).
pub fn split_with_proxy(ds: &Dataset, proxy: &ProxyClassifier, cfg: &SplitConfig) -> Result<OodSplit> {
    let features = ds.features();
    let logits = proxy.logits(&features)?;

    let (flags, threshold, scores) = match cfg.detector {
        DetectorKind::OpenMax => {
            let acts = proxy.activations(&features, cfg.source)?;
            let train_acts = acts.select(Axis(0), &proxy.train_indices);
            let train_labels: Vec<usize> = proxy.train_indices.iter().map(|&i| proxy.labels[i]).collect();
            let train_logits = logits.select(Axis(0), &proxy.train_indices);
            let train_preds = argmax_rows(&train_logits);
            let model = fit_openmax(
                &train_acts,
                &train_labels,
                &train_preds,
                proxy.classes,
                cfg.tail_size,
                cfg.alpha,
            )?;

            let mut flags = Vec::with_capacity(ds.n());
            let mut scores = Vec::with_capacity(ds.n());
            for i in 0..ds.n() {
                let probs = openmax_probs(&model, &acts.row(i))?;
                let unknown = probs[proxy.classes];
                let max_known = probs
                    .iter()
                    .take(proxy.classes)
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                let ood = if cfg.epsilon > 0.0 {
                    unknown > cfg.epsilon
                } else {
                    unknown >= max_known
                };
                flags.push(ood);
                scores.push(unknown);
            }
            (flags, cfg.epsilon, scores)
        }
        DetectorKind::TemperatureScaling => {
            if proxy.val_indices.is_empty() {
                return Err(Error::Config("temperature scaling needs a validation split".into()));
            }
            let val_logits = logits.select(Axis(0), &proxy.val_indices);
            let val_labels: Vec<usize> = proxy.val_indices.iter().map(|&i| proxy.labels[i]).collect();
            let temp = fit_temperature(&val_logits, &val_labels)?;
            let val_conf: Vec<f64> = val_logits
                .rows()
                .into_iter()
                .map(|r| msp_confidence(&r, temp.t))
                .collect();
            let delta = percentile(&val_conf, cfg.delta_percentile);

            let confidences: Vec<f64> = logits
                .rows()
                .into_iter()
                .map(|r| msp_confidence(&r, temp.t))
                .collect();
            (msp_flags(&confidences, delta), delta, confidences)
        }
    };

    let mut in_indices = Vec::new();
    let mut ood_indices = Vec::new();
    for (i, &ood) in flags.iter().enumerate() {
        if ood {
            ood_indices.push(i);
        } else {
            in_indices.push(i);
        }
    }
    if in_indices.is_empty() || ood_indices.is_empty() {
        let side = if in_indices.is_empty() { "in-distribution" } else { "OOD" };
        return Err(Error::EmptySplit {
            side: side.into(),
            histogram: score_histogram(&scores),
        });
    }
    Ok(OodSplit {
        in_indices,
        ood_indices,
        detector: cfg.detector,
        threshold,
    })
}

/// Nearest-rank percentile of `values`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn score_histogram(scores: &[f64]) -> String {
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return "  (no finite scores)".into();
    }
    let width = ((hi - lo) / 10.0).max(1e-12);
    let mut bins = [0usize; 10];
    for &s in scores {
        let b = (((s - lo) / width) as usize).min(9);
        bins[b] += 1;
    }
    let peak = bins.iter().cloned().max().unwrap_or(1).max(1);
    bins.iter()
        .enumerate()
        .map(|(i, &count)| {
            let bars = "#".repeat((count * 40 / peak).max(usize::from(count > 0)));
            format!(
                "  [{:>9.4}, {:>9.4}) {:>6}  {}",
                lo + i as f64 * width,
                lo + (i + 1) as f64 * width,
                count,
                bars
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

const MANIFEST_HEADER: &str = "tabshift-split-manifest v1";

/// Writes a line-oriented split manifest: header, detector, threshold,
/// config echo, then the two index sections.
pub fn write_manifest(split: &OodSplit, echo: &[(String, String)], path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    text.push_str(MANIFEST_HEADER);
    text.push('\n');
    text.push_str(&format!("detector {}\n", split.detector));
    text.push_str(&format!("threshold {}\n", split.threshold));
    for (key, value) in echo {
        text.push_str(&format!("cfg.{key} {value}\n"));
    }
    text.push_str(&format!("n_in {}\n", split.in_indices.len()));
    text.push_str(&format!("n_ood {}\n", split.ood_indices.len()));
    text.push_str("[in]\n");
    for i in &split.in_indices {
        text.push_str(&format!("{i}\n"));
    }
    text.push_str("[ood]\n");
    for i in &split.ood_indices {
        text.push_str(&format!("{i}\n"));
    }
    io::save_text(path, &text)
}

/// Parses a split manifest back into the split and its config echo.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<(OodSplit, Vec<(String, String)>)> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Data("not a split manifest".into()));
    }
    let mut detector = None;
    let mut threshold = None;
    let mut echo = Vec::new();
    let mut section = None;
    let mut in_indices = Vec::new();
    let mut ood_indices = Vec::new();
    for line in lines {
        match line {
            "[in]" => section = Some(true),
            "[ood]" => section = Some(false),
            _ => match section {
                Some(is_in) => {
                    let idx: usize = line
                        .parse()
                        .map_err(|_| Error::Data(format!("bad manifest index line `{line}`")))?;
                    if is_in {
                        in_indices.push(idx);
                    } else {
                        ood_indices.push(idx);
                    }
                }
                None => {
                    let (key, value) = line
                        .split_once(' ')
                        .ok_or_else(|| Error::Data(format!("bad manifest line `{line}`")))?;
                    match key {
                        "detector" => detector = Some(value.parse()?),
                        "threshold" => {
                            threshold = Some(value.parse().map_err(|_| {
                                Error::Data(format!("bad threshold `{value}`"))
                            })?)
                        }
                        "n_in" | "n_ood" => {}
                        k if k.starts_with("cfg.") => {
                            echo.push((k["cfg.".len()..].to_string(), value.to_string()));
                        }
                        other => return Err(Error::Data(format!("unknown manifest key `{other}`"))),
                    }
                }
            },
        }
    }
    Ok((
        OodSplit {
            in_indices,
            ood_indices,
            detector: detector.ok_or_else(|| Error::Data("manifest missing detector".into()))?,
            threshold: threshold.ok_or_else(|| Error::Data("manifest missing threshold".into()))?,
        },
        echo,
    ))
}
