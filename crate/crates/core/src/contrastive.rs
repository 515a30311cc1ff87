//! Contrastive pretraining of the tabular encoder.
//!
//! A model pairs an encoder (features → latent) with a projection head
//! (latent → projection space) trained end-to-end on a temperature-scaled
//! contrastive loss over two corrupted views of each batch. The projection
//! head exists only for training; downstream consumers read the encoder's
//! latent representations. An optional reconstruction decoder (latent →
//! input space, squared-error term) can be enabled in the config.

use std::path::Path;

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{corrupt_with_rng, Dataset, NormKind};
use crate::error::{Error, Result};
use crate::nn::{squared_error, Activation, Adam, GradientSet, Network};
use crate::{data, io, seed};

/// Encoder + projection head (+ optional reconstruction decoder) with the
/// contrastive temperature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContrastiveModel {
    pub encoder: Network,
    pub projector: Network,
    pub reconstructor: Option<Network>,
    pub temperature: f64,
    /// Corruption rate the model was (or will be) trained with; echoed into
    /// checkpoints and reused as the default when estimating parameter
    /// importance.
    pub corruption_rate: f64,
}

/// Pretraining settings. Architecture dims apply at [`ContrastiveModel::init`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub hidden: usize,
    pub latent: usize,
    pub projection: usize,
    pub temperature: f64,
    pub corruption_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Adds a reconstruction decoder and squared-error term when set.
    pub reconstruction: bool,
    pub recon_weight: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            hidden: 256,
            latent: 128,
            projection: 64,
            temperature: 0.5,
            corruption_rate: 0.3,
            batch_size: 256,
            epochs: 50,
            lr: 1e-3,
            reconstruction: false,
            recon_weight: 1.0,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be ≥ 2: the contrastive loss needs negatives".into()));
        }
        if self.temperature <= 0.0 || !self.temperature.is_finite() {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::Config("corruption_rate outside [0, 1]".into()));
        }
        if self.hidden == 0 || self.latent == 0 || self.projection == 0 {
            return Err(Error::Config("zero-width architecture".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

impl ContrastiveModel {
    /// Fresh model for `input_dim` features, seeded from `cfg.seed`.
    pub fn init(input_dim: usize, cfg: &PretrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed::rng(cfg.seed, "contrastive-init");
        let encoder = Network::glorot_uniform(
            &[input_dim, cfg.hidden, cfg.latent],
            &[Activation::ReLU, Activation::Identity],
            &mut rng,
        )?;
        let projector = Network::glorot_uniform(
            &[cfg.latent, cfg.latent, cfg.projection],
            &[Activation::ReLU, Activation::Identity],
            &mut rng,
        )?;
        let reconstructor = if cfg.reconstruction {
            Some(Network::glorot_uniform(
                &[cfg.latent, cfg.hidden, input_dim],
                &[Activation::ReLU, Activation::Identity],
                &mut rng,
            )?)
        } else {
            None
        };
        Self::from_networks(encoder, projector, reconstructor, cfg.temperature, cfg.corruption_rate)
    }

    /// Assembles a model from explicit networks, validating that the pieces
    /// compose.
    pub fn from_networks(
        encoder: Network,
        projector: Network,
        reconstructor: Option<Network>,
        temperature: f64,
        corruption_rate: f64,
    ) -> Result<Self> {
        if encoder.output_dim() != projector.input_dim() {
            return Err(Error::dim(
                encoder.output_dim(),
                projector.input_dim(),
                "encoder output must feed projector",
            ));
        }
        if let Some(recon) = &reconstructor {
            if recon.input_dim() != encoder.output_dim() {
                return Err(Error::dim(encoder.output_dim(), recon.input_dim(), "reconstructor input"));
            }
            if recon.output_dim() != encoder.input_dim() {
                return Err(Error::dim(encoder.input_dim(), recon.output_dim(), "reconstructor output"));
            }
        }
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(ContrastiveModel {
            encoder,
            projector,
            reconstructor,
            temperature,
            corruption_rate,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Deterministic encoder forward pass; no corruption at inference.
    pub fn encode(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.encoder.infer(x)
    }

    /// Flattened parameters of every trainable network, encoder first.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.encoder.flat_params();
        out.extend(self.projector.flat_params());
        if let Some(r) = &self.reconstructor {
            out.extend(r.flat_params());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let e = self.encoder.param_count();
        let p = self.projector.param_count();
        let r = self.reconstructor.as_ref().map_or(0, Network::param_count);
        if flat.len() != e + p + r {
            return Err(Error::dim(e + p + r, flat.len(), "flat parameter length"));
        }
        self.encoder.set_flat_params(&flat[..e])?;
        self.projector.set_flat_params(&flat[e..e + p])?;
        if let Some(recon) = &mut self.reconstructor {
            recon.set_flat_params(&flat[e + p..])?;
        }
        Ok(())
    }

    pub fn max_param_distance(&self, other: &ContrastiveModel) -> f64 {
        self.flat_params()
            .iter()
            .zip(other.flat_params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Saves a checkpoint with the preprocessing fingerprint of the dataset
    /// the model was trained on.
    pub fn save(&self, path: impl AsRef<Path>, trained_on: &Dataset) -> Result<()> {
        let ckpt = ContrastiveCheckpoint {
            format_version: CHECKPOINT_VERSION,
            temperature: self.temperature,
            corruption_rate: self.corruption_rate,
            norm_kind: trained_on.norm_applied(),
            schema_fingerprint: trained_on.fingerprint(),
            encoder: self.encoder.clone(),
            projector: self.projector.clone(),
            reconstructor: self.reconstructor.clone(),
        };
        io::save_json(path, &ckpt)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CheckpointHeader)> {
        let ckpt: ContrastiveCheckpoint = io::load_json(path)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.format_version
            )));
        }
        let header = CheckpointHeader {
            norm_kind: ckpt.norm_kind,
            schema_fingerprint: ckpt.schema_fingerprint,
        };
        let model = Self::from_networks(
            ckpt.encoder,
            ckpt.projector,
            ckpt.reconstructor,
            ckpt.temperature,
            ckpt.corruption_rate,
        )?;
        Ok((model, header))
    }

    /// Loads a checkpoint and rejects it when the dataset's preprocessing
    /// fingerprint differs from the one the model was trained with.
    pub fn load_checked(path: impl AsRef<Path>, ds: &Dataset) -> Result<Self> {
        let (model, header) = Self::load(path)?;
        if header.schema_fingerprint != ds.fingerprint() {
            return Err(Error::Checkpoint(format!(
                "preprocessing mismatch: checkpoint fingerprint {:#x} (norm {:?}) vs dataset {:#x} (norm {:?})",
                header.schema_fingerprint,
                header.norm_kind,
                ds.fingerprint(),
                ds.norm_applied(),
            )));
        }
        Ok(model)
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ContrastiveCheckpoint {
    format_version: u32,
    temperature: f64,
    corruption_rate: f64,
    norm_kind: Option<NormKind>,
    schema_fingerprint: u64,
    encoder: Network,
    projector: Network,
    reconstructor: Option<Network>,
}

/// Preprocessing provenance stored in a checkpoint.
#[derive(Debug, Clone, Copy)]
pub struct CheckpointHeader {
    pub norm_kind: Option<NormKind>,
    pub schema_fingerprint: u64,
}

/// Per-network gradients (or updates) for a [`ContrastiveModel`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub encoder: GradientSet,
    pub projector: GradientSet,
    pub reconstructor: Option<GradientSet>,
}

impl ModelGrads {
    pub fn zeros_like(model: &ContrastiveModel) -> Self {
        ModelGrads {
            encoder: GradientSet::zeros_like(&model.encoder),
            projector: GradientSet::zeros_like(&model.projector),
            reconstructor: model.reconstructor.as_ref().map(GradientSet::zeros_like),
        }
    }

    pub fn add_scaled(&mut self, other: &ModelGrads, c: f64) {
        self.encoder.add_scaled(&other.encoder, c);
        self.projector.add_scaled(&other.projector, c);
        if let (Some(a), Some(b)) = (&mut self.reconstructor, &other.reconstructor) {
            a.add_scaled(b, c);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.encoder
            .iter()
            .chain(self.projector.iter())
            .chain(self.reconstructor.iter().flat_map(|g| g.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.encoder
            .iter_mut()
            .chain(self.projector.iter_mut())
            .chain(self.reconstructor.iter_mut().flat_map(|g| g.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.encoder.len() + self.projector.len() + self.reconstructor.as_ref().map_or(0, GradientSet::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Value and input gradients of the symmetric temperature-scaled
/// contrastive loss.
pub struct NtXent {
    pub loss: f64,
    pub grad_a: Array2<f64>,
    pub grad_b: Array2<f64>,
}

/// Symmetric contrastive loss over paired views.
///
/// Rows of `z_a` and `z_b` are paired; with `m` pairs the loss averages, over
/// all `2m` anchors, `−log( exp(s(i, pos(i))/τ) / Σ_{k≠i} exp(s(i, k)/τ) )`
/// where `s` is cosine similarity over the concatenated embedding set and
/// `pos(i)` is the anchor's other view.
pub fn nt_xent(z_a: &Array2<f64>, z_b: &Array2<f64>, temperature: f64) -> Result<NtXent> {
    let m = z_a.nrows();
    if m < 2 {
        return Err(Error::Precondition("contrastive loss needs at least 2 pairs".into()));
    }
    if z_a.dim() != z_b.dim() {
        return Err(Error::dim(z_a.ncols(), z_b.ncols(), "paired view shapes"));
    }
    if temperature <= 0.0 {
        return Err(Error::Config("temperature must be positive".into()));
    }
    let p = z_a.ncols();
    let total = 2 * m;

    // Row-normalize the concatenated embeddings.
    let mut z = Array2::zeros((total, p));
    z.slice_mut(s![..m, ..]).assign(z_a);
    z.slice_mut(s![m.., ..]).assign(z_b);
    let mut norms = Array1::zeros(total);
    let mut unit = z.clone();
    for (i, mut row) in unit.rows_mut().into_iter().enumerate() {
        let r = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        norms[i] = r;
        row.mapv_inplace(|v| v / r);
    }

    let sims = unit.dot(&unit.t());
    let inv_t = 1.0 / temperature;
    let scale = 1.0 / total as f64;

    let mut loss = 0.0;
    // dL/dS, zero diagonal.
    let mut sim_grad = Array2::zeros((total, total));
    for i in 0..total {
        let pos = (i + m) % total;
        let mut max_logit = f64::NEG_INFINITY;
        for k in 0..total {
            if k != i {
                max_logit = max_logit.max(sims[[i, k]] * inv_t);
            }
        }
        let mut denom = 0.0;
        for k in 0..total {
            if k != i {
                denom += ((sims[[i, k]] * inv_t) - max_logit).exp();
            }
        }
        let lse = max_logit + denom.ln();
        loss += lse - sims[[i, pos]] * inv_t;
        for k in 0..total {
            if k == i {
                continue;
            }
            let softmax_k = ((sims[[i, k]] * inv_t) - lse).exp();
            let indicator = if k == pos { 1.0 } else { 0.0 };
            sim_grad[[i, k]] = (softmax_k - indicator) * inv_t * scale;
        }
    }
    loss *= scale;

    // dL/dU = (G + Gᵀ)·U, then back through row normalization.
    let sym = &sim_grad + &sim_grad.t();
    let unit_grad = sym.dot(&unit);
    let mut z_grad = Array2::zeros((total, p));
    for i in 0..total {
        let u = unit.row(i);
        let g = unit_grad.row(i);
        let radial = g.dot(&u);
        for j in 0..p {
            z_grad[[i, j]] = (g[j] - radial * u[j]) / norms[i];
        }
    }

    Ok(NtXent {
        loss,
        grad_a: z_grad.slice(s![..m, ..]).to_owned(),
        grad_b: z_grad.slice(s![m.., ..]).to_owned(),
    })
}

/// Loss and parameter gradients for one pair of views.
///
/// The loss is the contrastive term over projected embeddings (zero for a
/// single-row batch, which has no negatives) plus, when a reconstructor is
/// present, `recon_weight` times the mean squared reconstruction error of
/// the clean batch from each view's latent, averaged over the two views.
pub fn batch_loss_and_grads(
    model: &ContrastiveModel,
    view_a: &Array2<f64>,
    view_b: &Array2<f64>,
    clean: &Array2<f64>,
    recon_weight: f64,
) -> Result<(f64, ModelGrads)> {
    let enc_a = model.encoder.forward(view_a)?;
    let enc_b = model.encoder.forward(view_b)?;
    let proj_a = model.projector.forward(enc_a.output())?;
    let proj_b = model.projector.forward(enc_b.output())?;

    let m = view_a.nrows();
    let mut loss = 0.0;
    let mut grads = ModelGrads::zeros_like(model);
    let mut up_enc_a: Array2<f64>;
    let mut up_enc_b: Array2<f64>;

    if m >= 2 {
        let ntx = nt_xent(proj_a.output(), proj_b.output(), model.temperature)?;
        loss += ntx.loss;
        let bp_a = model.projector.backward(&proj_a, &ntx.grad_a)?;
        let bp_b = model.projector.backward(&proj_b, &ntx.grad_b)?;
        grads.projector.add_scaled(&bp_a.grads, 1.0);
        grads.projector.add_scaled(&bp_b.grads, 1.0);
        up_enc_a = bp_a.input_grad;
        up_enc_b = bp_b.input_grad;
    } else {
        up_enc_a = Array2::zeros((m, model.latent_dim()));
        up_enc_b = Array2::zeros((m, model.latent_dim()));
    }

    if let Some(recon) = &model.reconstructor {
        let half = 0.5 * recon_weight;
        for (enc_cache, up_enc) in [(&enc_a, &mut up_enc_a), (&enc_b, &mut up_enc_b)] {
            let rec_cache = recon.forward(enc_cache.output())?;
            let (mse, grad) = squared_error(rec_cache.output(), clean)?;
            loss += half * mse;
            let bp = recon.backward(&rec_cache, &grad.mapv(|v| v * half))?;
            grads
                .reconstructor
                .as_mut()
                .expect("reconstructor grads allocated")
                .add_scaled(&bp.grads, 1.0);
            *up_enc += &bp.input_grad;
        }
    }

    let bp_enc_a = model.encoder.backward(&enc_a, &up_enc_a)?;
    let bp_enc_b = model.encoder.backward(&enc_b, &up_enc_b)?;
    grads.encoder.add_scaled(&bp_enc_a.grads, 1.0);
    grads.encoder.add_scaled(&bp_enc_b.grads, 1.0);

    Ok((loss, grads))
}

/// Shared seeded training loop.
///
/// The stream of shuffles and corrupted views is a pure function of
/// `cfg.seed`, so two callers with identical data and configs march through
/// identical batches. `penalty` contributes an extra loss term and gradient;
/// `gate` transforms the per-step update vector before it is applied.
pub(crate) fn train_loop<P, G>(
    model: &mut ContrastiveModel,
    ds: &Dataset,
    cfg: &PretrainConfig,
    mut penalty: P,
    mut gate: G,
) -> Result<Vec<f64>>
where
    P: FnMut(&ContrastiveModel) -> Result<(f64, Option<ModelGrads>)>,
    G: FnMut(&mut ModelGrads),
{
    cfg.validate()?;
    if ds.n() == 0 {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    if ds.dim() != model.encoder.input_dim() {
        return Err(Error::dim(model.encoder.input_dim(), ds.dim(), "dataset width vs encoder input"));
    }

    let marginals = ds.marginals();
    let features = ds.features();
    let mut rng = seed::rng(cfg.seed, "contrastive-train");
    let mut opt_enc = Adam::new(&model.encoder, cfg.lr);
    let mut opt_proj = Adam::new(&model.projector, cfg.lr);
    let mut opt_recon = model.reconstructor.as_ref().map(|r| Adam::new(r, cfg.lr));

    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..ds.n()).collect();
    for epoch in 0..cfg.epochs {
        data::shuffle(&mut order, &mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            // A trailing single row has no negatives; skip it.
            if chunk.len() < 2 {
                continue;
            }
            let clean = features.select(Axis(0), chunk);
            let view_a = corrupt_with_rng(&clean, &marginals, cfg.corruption_rate, &mut rng)?;
            let view_b = corrupt_with_rng(&clean, &marginals, cfg.corruption_rate, &mut rng)?;

            let (data_loss, mut grads) =
                batch_loss_and_grads(model, &view_a, &view_b, &clean, cfg.recon_weight)?;
            let (pen_loss, pen_grads) = penalty(model)?;
            if let Some(pg) = pen_grads {
                grads.add_scaled(&pg, 1.0);
            }
            let total = data_loss + pen_loss;
            if !total.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epoch}, batch {batches}: data {data_loss}, penalty {pen_loss}"
                )));
            }

            let mut update = ModelGrads {
                encoder: opt_enc.compute_update(&grads.encoder)?,
                projector: opt_proj.compute_update(&grads.projector)?,
                reconstructor: match (&mut opt_recon, &grads.reconstructor) {
                    (Some(opt), Some(g)) => Some(opt.compute_update(g)?),
                    _ => None,
                },
            };
            gate(&mut update);
            model.encoder.apply_update(&update.encoder)?;
            model.projector.apply_update(&update.projector)?;
            if let (Some(recon), Some(u)) = (&mut model.reconstructor, &update.reconstructor) {
                recon.apply_update(u)?;
            }

            epoch_loss += total;
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::Data("no batch had the 2 rows the contrastive loss needs".into()));
        }
        trace.push(epoch_loss / batches as f64);
    }
    Ok(trace)
}

/// Pretrains the model in place and returns the per-epoch mean loss trace.
pub fn pretrain(model: &mut ContrastiveModel, ds: &Dataset, cfg: &PretrainConfig) -> Result<Vec<f64>> {
    train_loop(model, ds, cfg, |_| Ok((0.0, None)), |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use crate::data::{Targets, TaskKind};
    use crate::gradcheck;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn small_cfg() -> PretrainConfig {
        PretrainConfig {
            hidden: 16,
            latent: 8,
            projection: 4,
            batch_size: 16,
            epochs: 5,
            seed: 42,
            ..Default::default()
        }
    }

    fn blob_dataset(n: usize, seed_val: u64) -> Dataset {
        let mut rng = seed::rng(seed_val, "blobs");
        let features = Array2::from_shape_fn((n, 6), |(r, c)| {
            let center = if r % 2 == 0 { 1.5 } else { -1.5 };
            let base = if c < 3 { center } else { 0.0 };
            base + rng.random_range(-0.5..0.5)
        });
        let labels = (0..n).map(|r| r % 2).collect();
        Dataset::from_numeric(features, Targets::Classes(labels), TaskKind::Classification { classes: 2 })
            .unwrap()
    }

    /// Direct enumeration of the loss definition, independent of the
    /// vectorized implementation.
    fn brute_force_loss(z_a: &Array2<f64>, z_b: &Array2<f64>, tau: f64) -> f64 {
        let m = z_a.nrows();
        let total = 2 * m;
        let p = z_a.ncols();
        let row = |i: usize, j: usize| -> f64 {
            if i < m {
                z_a[[i, j]]
            } else {
                z_b[[i - m, j]]
            }
        };
        let cos = |i: usize, k: usize| -> f64 {
            let mut dot = 0.0;
            let mut ni = 0.0;
            let mut nk = 0.0;
            for j in 0..p {
                dot += row(i, j) * row(k, j);
                ni += row(i, j) * row(i, j);
                nk += row(k, j) * row(k, j);
            }
            dot / (ni.sqrt().max(1e-12) * nk.sqrt().max(1e-12))
        };
        let mut loss = 0.0;
        for i in 0..total {
            let pos = (i + m) % total;
            let mut denom = 0.0;
            for k in 0..total {
                if k != i {
                    denom += (cos(i, k) / tau).exp();
                }
            }
            loss += -((cos(i, pos) / tau).exp() / denom).ln();
        }
        loss / total as f64
    }

    #[test]
    fn nt_xent_rejects_single_pair() {
        let z = array![[1.0, 0.0]];
        assert!(nt_xent(&z, &z, 1.0).is_err());
    }

    #[test]
    fn nt_xent_matches_brute_force_enumeration() {
        let z_a = array![[1.0, 0.2], [-0.5, 0.8]];
        let z_b = array![[0.9, 0.1], [-0.4, 0.9]];
        let got = nt_xent(&z_a, &z_b, 1.0).unwrap();
        let want = brute_force_loss(&z_a, &z_b, 1.0);
        assert_abs_diff_eq!(got.loss, want, epsilon = 1e-12);
    }

    #[test]
    fn nt_xent_scale_invariant() {
        let mut rng = seed::rng(3, "ntx-scale");
        let z_a = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let z_b = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let base = nt_xent(&z_a, &z_b, 0.5).unwrap().loss;
        let scaled = nt_xent(&(z_a * 7.3), &(z_b * 7.3), 0.5).unwrap().loss;
        assert_abs_diff_eq!(base, scaled, epsilon = 1e-10);
    }

    #[test]
    fn nt_xent_symmetric_in_views() {
        let mut rng = seed::rng(4, "ntx-sym");
        let z_a = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let z_b = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let fwd = nt_xent(&z_a, &z_b, 0.7).unwrap();
        let rev = nt_xent(&z_b, &z_a, 0.7).unwrap();
        assert_abs_diff_eq!(fwd.loss, rev.loss, epsilon = 1e-12);
        for (x, y) in fwd.grad_a.iter().zip(rev.grad_b.iter()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
        }
    }

    #[test]
    fn nt_xent_gradient_matches_finite_differences() {
        let mut rng = seed::rng(5, "ntx-fd");
        for _ in 0..8 {
            let m = rng.random_range(2..=8usize);
            let p = rng.random_range(2..=8usize);
            let z_a = Array2::from_shape_fn((m, p), |_| rng.random_range(-1.0..1.0));
            let z_b = Array2::from_shape_fn((m, p), |_| rng.random_range(-1.0..1.0));
            let tau = rng.random_range(0.2..1.5);
            let got = nt_xent(&z_a, &z_b, tau).unwrap();
            let analytic: Vec<f64> = got.grad_a.iter().chain(got.grad_b.iter()).cloned().collect();
            let flat: Vec<f64> = z_a.iter().chain(z_b.iter()).cloned().collect();
            let numeric = gradcheck::central_diff(
                |v| {
                    let za = Array2::from_shape_vec((m, p), v[..m * p].to_vec()).unwrap();
                    let zb = Array2::from_shape_vec((m, p), v[m * p..].to_vec()).unwrap();
                    nt_xent(&za, &zb, tau).unwrap().loss
                },
                &flat,
                1e-5,
            );
            let report = gradcheck::compare(&analytic, &numeric);
            assert!(report.max_rel_err < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn nt_xent_prefers_true_pairings() {
        // With three well-separated directions and near-copies as the second
        // view, the identity pairing beats every other permutation.
        let z_a = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let z_b = array![[0.95, 0.05, 0.0], [0.05, 0.95, 0.0], [0.0, 0.05, 0.95]];
        let identity = nt_xent(&z_a, &z_b, 0.5).unwrap().loss;
        let perms = [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for perm in perms {
            let permuted = Array2::from_shape_fn((3, 3), |(r, c)| z_b[[perm[r], c]]);
            let loss = nt_xent(&z_a, &permuted, 0.5).unwrap().loss;
            assert!(identity < loss, "pairing {perm:?} scored {loss} vs {identity}");
        }
    }

    #[test]
    fn batch_loss_gradients_match_finite_differences() {
        // Parameter gradients through encoder, projector, and reconstructor.
        let mut rng = seed::rng(6, "batch-fd");
        let encoder = Network::glorot_uniform(&[4, 5, 3], &[Activation::ReLU, Activation::Identity], &mut rng).unwrap();
        let projector = Network::glorot_uniform(&[3, 2], &[Activation::Identity], &mut rng).unwrap();
        let recon = Network::glorot_uniform(&[3, 4], &[Activation::Identity], &mut rng).unwrap();
        let model = ContrastiveModel::from_networks(encoder, projector, Some(recon), 0.5, 0.0).unwrap();

        let clean = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let view_a = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let view_b = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));

        let (_, grads) = batch_loss_and_grads(&model, &view_a, &view_b, &clean, 0.7).unwrap();
        let analytic: Vec<f64> = grads.iter().cloned().collect();
        let base = model.flat_params();
        let numeric = gradcheck::central_diff(
            |p| {
                let mut probe = model.clone();
                probe.set_flat_params(p).unwrap();
                batch_loss_and_grads(&probe, &view_a, &view_b, &clean, 0.7).unwrap().0
            },
            &base,
            1e-5,
        );
        let report = gradcheck::compare(&analytic, &numeric);
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn pretrain_zero_epochs_is_identity() {
        let ds = blob_dataset(40, 1);
        let cfg = PretrainConfig {
            epochs: 0,
            ..small_cfg()
        };
        let mut model = ContrastiveModel::init(ds.dim(), &cfg).unwrap();
        let before = model.flat_params();
        let trace = pretrain(&mut model, &ds, &cfg).unwrap();
        assert!(trace.is_empty());
        assert_eq!(before, model.flat_params());
    }

    #[test]
    fn pretrain_reduces_loss_and_stays_finite() {
        let ds = blob_dataset(200, 2);
        let cfg = small_cfg();
        let mut model = ContrastiveModel::init(ds.dim(), &cfg).unwrap();
        let trace = pretrain(&mut model, &ds, &cfg).unwrap();
        assert_eq!(trace.len(), cfg.epochs);
        assert!(trace.last().unwrap() < trace.first().unwrap());
        assert!(model.flat_params().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pretrain_same_seed_same_trace() {
        let ds = blob_dataset(60, 3);
        let cfg = small_cfg();
        let mut m1 = ContrastiveModel::init(ds.dim(), &cfg).unwrap();
        let mut m2 = ContrastiveModel::init(ds.dim(), &cfg).unwrap();
        let t1 = pretrain(&mut m1, &ds, &cfg).unwrap();
        let t2 = pretrain(&mut m2, &ds, &cfg).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(m1.flat_params(), m2.flat_params());
    }

    #[test]
    fn pretrain_divergence_aborts_with_diagnostics() {
        let ds = blob_dataset(40, 4);
        let cfg = PretrainConfig {
            lr: 1e200,
            reconstruction: true,
            ..small_cfg()
        };
        let mut model = ContrastiveModel::init(ds.dim(), &cfg).unwrap();
        match pretrain(&mut model, &ds, &cfg) {
            Err(Error::Diverged(msg)) => assert!(msg.contains("epoch")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn encode_shape_and_determinism() {
        let ds = blob_dataset(30, 5);
        let cfg = small_cfg();
        let model = ContrastiveModel::init(ds.dim(), &cfg).unwrap();
        let x = ds.features().to_owned();
        let a = model.encode(&x).unwrap();
        let b = model.encode(&x).unwrap();
        assert_eq!(a.dim(), (30, cfg.latent));
        assert_eq!(a, b);
    }

    #[test]
    fn encode_is_batch_independent() {
        let ds = blob_dataset(20, 6);
        let model = ContrastiveModel::init(ds.dim(), &small_cfg()).unwrap();
        let x = ds.features().to_owned();
        let whole = model.encode(&x).unwrap();
        let first = model.encode(&x.slice(s![..8, ..]).to_owned()).unwrap();
        let second = model.encode(&x.slice(s![8.., ..]).to_owned()).unwrap();
        for i in 0..20 {
            let expect = if i < 8 { first.row(i) } else { second.row(i - 8) };
            for (a, b) in whole.row(i).iter().zip(expect.iter()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_and_fingerprint_check() {
        let ds = blob_dataset(20, 7);
        let model = ContrastiveModel::init(ds.dim(), &small_cfg()).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        model.save(file.path(), &ds).unwrap();

        let back = ContrastiveModel::load_checked(file.path(), &ds).unwrap();
        assert_eq!(model.flat_params(), back.flat_params());

        // A differently-preprocessed dataset is rejected.
        let normed = ds.normalize(NormKind::L2).unwrap();
        match ContrastiveModel::load_checked(file.path(), &normed) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("mismatch")),
            other => panic!("expected checkpoint mismatch, got {other:?}"),
        }
    }
}
