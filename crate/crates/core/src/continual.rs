//! Continual adaptation of a pretrained contrastive model.
//!
//! The engine estimates a diagonal Fisher importance for every parameter,
//! snapshots the pretrained parameters, and retrains on a replay mix of
//! in-distribution and OOD rows under two safeguards:
//!
//! - a quadratic anchor `(λ/2)·Σ Fᵢ(θᵢ − θ*ᵢ)²` pulling parameters back to
//!   the snapshot, and
//! - per-parameter update gating `1 / (1 + γ·F̄ᵢ)` that attenuates the
//!   optimizer step on important parameters toward zero.
//!
//! Gating is applied to the optimizer's update vector rather than the raw
//! gradient: the adaptive-moment rule is invariant to per-parameter gradient
//! rescaling (numerator and denominator scale together), so pre-optimizer
//! gating would barely move the step. Gating the step itself makes the brake
//! effective at any γ.
//!
//! Retraining is self-supervised only; labels of the OOD pool are never
//! consumed.

use std::path::Path;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::contrastive::{batch_loss_and_grads, train_loop, ContrastiveModel, ModelGrads, PretrainConfig};
use crate::data::{corrupt_with_rng, Dataset};
use crate::error::{Error, Result};
use crate::nn::GradientSet;
use crate::oodsplit::OodSplit;
use crate::{data, io, seed};

/// Nonnegative per-parameter importance, shape-congruent with a
/// [`ContrastiveModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FisherDiag {
    pub encoder: GradientSet,
    pub projector: GradientSet,
    pub reconstructor: Option<GradientSet>,
}

impl FisherDiag {
    pub fn zeros_like(model: &ContrastiveModel) -> Self {
        let g = ModelGrads::zeros_like(model);
        FisherDiag {
            encoder: g.encoder,
            projector: g.projector,
            reconstructor: g.reconstructor,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.encoder
            .iter()
            .chain(self.projector.iter())
            .chain(self.reconstructor.iter().flat_map(|g| g.iter()))
    }

    pub fn len(&self) -> usize {
        self.encoder.len()
            + self.projector.len()
            + self.reconstructor.as_ref().map_or(0, GradientSet::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.iter().sum::<f64>() / self.len() as f64
        }
    }

    pub fn min(&self) -> f64 {
        self.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Snapshot of the pretrained parameters plus importance and the two brake
/// strengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorState {
    pub theta_star: ContrastiveModel,
    pub fisher: FisherDiag,
    /// Quadratic anchoring strength.
    pub lambda: f64,
    /// Update-gating strength.
    pub gamma: f64,
    fisher_mean: f64,
}

impl AnchorState {
    pub fn new(theta_star: ContrastiveModel, fisher: FisherDiag, lambda: f64, gamma: f64) -> Result<Self> {
        if lambda < 0.0 || gamma < 0.0 {
            return Err(Error::Config("lambda and gamma must be nonnegative".into()));
        }
        if fisher.len() != theta_star.flat_params().len() {
            return Err(Error::dim(
                theta_star.flat_params().len(),
                fisher.len(),
                "fisher vs parameter count",
            ));
        }
        if fisher.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Data("fisher entries must be nonnegative and finite".into()));
        }
        let fisher_mean = fisher.mean();
        Ok(AnchorState {
            theta_star,
            fisher,
            lambda,
            gamma,
            fisher_mean,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::save_json(
            path,
            &AnchorCheckpoint {
                format_version: ANCHOR_CHECKPOINT_VERSION,
                anchor: self.clone(),
            },
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt: AnchorCheckpoint = io::load_json(path)?;
        if ckpt.format_version != ANCHOR_CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported anchor checkpoint version {}",
                ckpt.format_version
            )));
        }
        Ok(ckpt.anchor)
    }
}

const ANCHOR_CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct AnchorCheckpoint {
    format_version: u32,
    anchor: AnchorState,
}

/// Replay subsets of the in-distribution and OOD pools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySets {
    pub in_rows: Vec<usize>,
    pub ood_rows: Vec<usize>,
    pub seed: u64,
}

impl ReplaySets {
    /// All replay row indices, in-distribution rows first.
    pub fn union(&self) -> Vec<usize> {
        self.in_rows.iter().chain(self.ood_rows.iter()).cloned().collect()
    }
}

/// Fisher estimation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FisherConfig {
    pub batch_size: usize,
    pub max_samples: usize,
    /// Corruption rate for the view pairs; defaults to the model's own rate.
    pub corruption_rate: Option<f64>,
    pub recon_weight: f64,
    pub seed: u64,
}

impl Default for FisherConfig {
    fn default() -> Self {
        FisherConfig {
            batch_size: 64,
            max_samples: 2000,
            corruption_rate: None,
            recon_weight: 1.0,
            seed: 0,
        }
    }
}

/// Diagonal empirical Fisher: the per-parameter mean of squared gradients of
/// the self-supervised loss over sampled batches.
pub fn compute_fisher(model: &ContrastiveModel, ds: &Dataset, cfg: &FisherConfig) -> Result<FisherDiag> {
    if ds.n() == 0 {
        return Err(Error::Data("fisher estimation needs a nonempty dataset".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("fisher batch_size must be positive".into()));
    }
    let rate = cfg.corruption_rate.unwrap_or(model.corruption_rate);
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config("corruption rate outside [0, 1]".into()));
    }

    let mut order: Vec<usize> = (0..ds.n()).collect();
    let mut sample_rng = seed::rng(cfg.seed, "fisher-sample");
    data::shuffle(&mut order, &mut sample_rng);
    order.truncate(cfg.max_samples.max(1));

    let marginals = ds.marginals();
    let features = ds.features();
    let mut view_rng = seed::rng(cfg.seed, "fisher-views");

    let mut acc = FisherDiag::zeros_like(model);
    let mut batches = 0usize;
    for chunk in order.chunks(cfg.batch_size) {
        let clean = features.select(Axis(0), chunk);
        let view_a = corrupt_with_rng(&clean, &marginals, rate, &mut view_rng)?;
        let view_b = corrupt_with_rng(&clean, &marginals, rate, &mut view_rng)?;
        let (_, grads) = batch_loss_and_grads(model, &view_a, &view_b, &clean, cfg.recon_weight)?;
        acc.encoder.zip_apply(&grads.encoder, |f, g| f + g * g);
        acc.projector.zip_apply(&grads.projector, |f, g| f + g * g);
        if let (Some(fr), Some(gr)) = (&mut acc.reconstructor, &grads.reconstructor) {
            fr.zip_apply(gr, |f, g| f + g * g);
        }
        batches += 1;
    }
    let inv = 1.0 / batches as f64;
    acc.encoder.scale(inv);
    acc.projector.scale(inv);
    if let Some(r) = &mut acc.reconstructor {
        r.scale(inv);
    }
    Ok(acc)
}

/// Quadratic anchoring term `(λ/2)·Σ Fᵢ(θᵢ − θ*ᵢ)²` and its gradient
/// `λ·F ⊙ (θ − θ*)`.
pub fn ewc_penalty(model: &ContrastiveModel, anchor: &AnchorState) -> Result<(f64, ModelGrads)> {
    let theta: Vec<f64> = model.flat_params();
    let star: Vec<f64> = anchor.theta_star.flat_params();
    if theta.len() != star.len() {
        return Err(Error::dim(star.len(), theta.len(), "anchor vs model parameters"));
    }

    let mut grads = ModelGrads::zeros_like(model);
    let mut penalty = 0.0;
    for ((g, &f), (&t, &s)) in grads
        .iter_mut()
        .zip(anchor.fisher.iter())
        .zip(theta.iter().zip(star.iter()))
    {
        let diff = t - s;
        penalty += f * diff * diff;
        *g = anchor.lambda * f * diff;
    }
    Ok((0.5 * anchor.lambda * penalty, grads))
}

/// Multiplies every entry by `1 / (1 + γ·F̄ᵢ)` where `F̄` is the Fisher
/// rescaled to mean one. High-importance parameters are attenuated toward
/// zero; a zero Fisher (or γ = 0) leaves the input unchanged.
pub fn gate_gradients(grads: &mut ModelGrads, anchor: &AnchorState) -> Result<()> {
    if grads.len() != anchor.fisher.len() {
        return Err(Error::dim(anchor.fisher.len(), grads.len(), "gradients vs fisher"));
    }
    if anchor.gamma == 0.0 || anchor.fisher_mean == 0.0 {
        return Ok(());
    }
    let inv_mean = 1.0 / anchor.fisher_mean;
    for (g, &f) in grads.iter_mut().zip(anchor.fisher.iter()) {
        *g /= 1.0 + anchor.gamma * f * inv_mean;
    }
    Ok(())
}

/// Uniform without-replacement subsets of the split's pools.
pub fn build_replay(split: &OodSplit, in_size: usize, ood_size: usize, replay_seed: u64) -> Result<ReplaySets> {
    if in_size > split.in_indices.len() {
        return Err(Error::Precondition(format!(
            "requested {} in-distribution replay rows but the pool has {}",
            in_size,
            split.in_indices.len()
        )));
    }
    if ood_size > split.ood_indices.len() {
        return Err(Error::Precondition(format!(
            "requested {} OOD replay rows but the pool has {}",
            ood_size,
            split.ood_indices.len()
        )));
    }
    let mut rng = seed::rng(replay_seed, "replay");
    let mut in_rows = split.in_indices.clone();
    data::shuffle(&mut in_rows, &mut rng);
    in_rows.truncate(in_size);
    let mut ood_rows = split.ood_indices.clone();
    data::shuffle(&mut ood_rows, &mut rng);
    ood_rows.truncate(ood_size);
    Ok(ReplaySets {
        in_rows,
        ood_rows,
        seed: replay_seed,
    })
}

/// Replay subsets drawn from caller-chosen pools (rather than a detector
/// split); used when pools are known by construction.
pub fn build_replay_from_pools(
    in_pool: &[usize],
    ood_pool: &[usize],
    in_size: usize,
    ood_size: usize,
    replay_seed: u64,
) -> Result<ReplaySets> {
    if in_size > in_pool.len() || ood_size > ood_pool.len() {
        return Err(Error::Precondition("replay size exceeds pool".into()));
    }
    let mut rng = seed::rng(replay_seed, "replay");
    let mut in_rows = in_pool.to_vec();
    data::shuffle(&mut in_rows, &mut rng);
    in_rows.truncate(in_size);
    let mut ood_rows = ood_pool.to_vec();
    data::shuffle(&mut ood_rows, &mut rng);
    ood_rows.truncate(ood_size);
    Ok(ReplaySets {
        in_rows,
        ood_rows,
        seed: replay_seed,
    })
}

/// Adaptation settings for [`continual_train`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinualConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub corruption_rate: f64,
    pub recon_weight: f64,
    pub seed: u64,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        ContinualConfig {
            lambda: 100.0,
            gamma: 10.0,
            epochs: 10,
            batch_size: 256,
            lr: 1e-3,
            corruption_rate: 0.3,
            recon_weight: 1.0,
            seed: 0,
        }
    }
}

/// Self-supervised retraining on the replay rows with the quadratic anchor
/// added to the loss and update gating applied to every step.
///
/// Returns the adapted model and its loss trace; the input model is left
/// untouched.
pub fn continual_train(
    model: &ContrastiveModel,
    anchor: &AnchorState,
    replay: &ReplaySets,
    ds: &Dataset,
    cfg: &ContinualConfig,
) -> Result<(ContrastiveModel, Vec<f64>)> {
    if anchor.theta_star.max_param_distance(model) != 0.0 {
        return Err(Error::Precondition(
            "anchor must snapshot the model being adapted, before any adaptation".into(),
        ));
    }
    let replay_ds = ds.take(&replay.union())?;
    if replay_ds.n() == 0 {
        return Err(Error::Data("empty replay set".into()));
    }

    let train_cfg = PretrainConfig {
        // Architecture fields are unused on an existing model.
        hidden: 1,
        latent: 1,
        projection: 1,
        temperature: model.temperature,
        corruption_rate: cfg.corruption_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        lr: cfg.lr,
        reconstruction: model.reconstructor.is_some(),
        recon_weight: cfg.recon_weight,
        seed: cfg.seed,
    };

    let mut adapted = model.clone();
    let trace = train_loop(
        &mut adapted,
        &replay_ds,
        &train_cfg,
        |m| {
            let (loss, grads) = ewc_penalty(m, anchor)?;
            Ok((loss, Some(grads)))
        },
        |update| {
            gate_gradients(update, anchor).expect("anchor congruent with model");
        },
    )?;
    Ok((adapted, trace))
}
