//! Dense-network substrate: forward/backward passes, activations, softmax,
//! and an adaptive-moment optimizer.
//!
//! The layer vocabulary is deliberately small (dense + ReLU/Identity) so the
//! backward pass stays hand-checkable against finite differences. Everything
//! is `f64` and deterministic under a seed: the same seed and inputs produce
//! bitwise-identical parameters after any number of steps.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element-wise activation applied after a dense layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Identity,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::ReLU => z.mapv(|v| v.max(0.0)),
            Activation::Identity => z.clone(),
        }
    }

    /// Derivative evaluated at the pre-activation. ReLU uses 0 at the kink.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// A dense layer `y = act(x · Wᵀ + b)` with `weight` of shape `out × in`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// A layered dense model.
///
/// Immutable-after-build for inference; training mutates parameters through
/// [`Adam::step`] (or [`Network::apply_update`]), which bumps an internal
/// revision counter used to reject stale forward caches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    #[serde(skip)]
    revision: u64,
}

impl Network {
    /// Builds a network from explicit layers, validating that adjacent
    /// dimensions compose and every parameter is finite.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::dim(
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                    "adjacent layer dimensions must compose",
                ));
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::dim(layer.output_dim(), layer.bias.len(), "bias length"));
            }
            let finite = layer.weight.iter().all(|v| v.is_finite())
                && layer.bias.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Config("non-finite parameter entry".into()));
            }
        }
        Ok(Network { layers, revision: 0 })
    }

    /// Glorot-uniform initialization: entries drawn from
    /// `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot_uniform<R: Rng>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("need input and output dims".into()));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::dim(dims.len() - 1, activations.len(), "one activation per layer"));
        }
        if dims.contains(&0) {
            return Err(Error::Config("zero-width layer".into()));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(pair, &activation)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    /// ReLU hidden layers followed by an Identity output layer.
    pub fn mlp<R: Rng>(input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let mut acts = vec![Activation::ReLU; hidden.len()];
        acts.push(Activation::Identity);
        Self::glorot_uniform(&dims, &acts, rng)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Forward pass caching intermediate activations for [`Network::backward`].
    pub fn forward(&self, x: &Array2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), x.ncols(), "forward input width"));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let z = current.dot(&layer.weight.t()) + &layer.bias;
            let a = layer.activation.apply(&z);
            pre.push(z);
            post.push(a.clone());
            current = a;
        }
        Ok(ForwardCache {
            revision: self.revision,
            input: x.clone(),
            pre,
            post,
        })
    }

    /// Forward pass without retaining the cache.
    pub fn infer(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), x.ncols(), "infer input width"));
        }
        let mut current = x.clone();
        for layer in &self.layers {
            let z = current.dot(&layer.weight.t()) + &layer.bias;
            current = layer.activation.apply(&z);
        }
        Ok(current)
    }

    /// Exact analytic gradients of the scalar loss whose gradient with respect
    /// to the network output is `upstream`. Also returns the gradient with
    /// respect to the input, which callers chain through composed networks.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> Result<Backprop> {
        if cache.revision != self.revision {
            return Err(Error::Precondition(
                "forward cache is stale: parameters changed since it was produced".into(),
            ));
        }
        if cache.pre.len() != self.layers.len() {
            return Err(Error::Precondition("forward cache belongs to another network".into()));
        }
        let out = cache.post.last().expect("cache has layers");
        if upstream.dim() != out.dim() {
            return Err(Error::dim(out.ncols(), upstream.ncols(), "upstream gradient shape"));
        }

        let mut grads = vec![LayerGrad::default(); self.layers.len()];
        let mut delta = upstream.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[k];
            Zip::from(&mut delta).and(z).for_each(|d, &zv| {
                *d *= layer.activation.derivative(zv);
            });
            let below = if k == 0 { &cache.input } else { &cache.post[k - 1] };
            grads[k] = LayerGrad {
                weight: delta.t().dot(below),
                bias: delta.sum_axis(Axis(0)),
            };
            delta = delta.dot(&layer.weight);
        }
        Ok(Backprop {
            grads: GradientSet { layers: grads },
            input_grad: delta,
        })
    }

    /// Applies `θ ← θ − delta` entry-wise.
    pub fn apply_update(&mut self, delta: &GradientSet) -> Result<()> {
        if !delta.congruent_with(self) {
            return Err(Error::Precondition("update not shape-congruent with network".into()));
        }
        for (layer, d) in self.layers.iter_mut().zip(&delta.layers) {
            layer.weight -= &d.weight;
            layer.bias -= &d.bias;
        }
        self.revision += 1;
        Ok(())
    }

    /// Flattened read-only view of all parameters, weights before biases,
    /// layer by layer.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    /// Overwrites all parameters from a flat vector in [`Network::flat_params`] order.
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dim(self.param_count(), flat.len(), "flat parameter length"));
        }
        let mut it = flat.iter();
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut() {
                *w = *it.next().unwrap();
            }
            for b in layer.bias.iter_mut() {
                *b = *it.next().unwrap();
            }
        }
        self.revision += 1;
        Ok(())
    }

    /// Largest absolute difference to another network's parameters.
    pub fn max_param_distance(&self, other: &Network) -> f64 {
        self.flat_params()
            .iter()
            .zip(other.flat_params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Cached intermediates from a [`Network::forward`] call.
#[derive(Debug)]
pub struct ForwardCache {
    revision: u64,
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("cache has layers")
    }
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Backprop {
    pub grads: GradientSet,
    /// Gradient of the loss with respect to the forward input.
    pub input_grad: Array2<f64>,
}

/// Per-layer gradient tensors, shape-congruent with a [`Network`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Per-parameter tensors matching a network's layout. Doubles as storage for
/// optimizer moments, Fisher diagonals, and update vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        GradientSet {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn congruent_with(&self, net: &Network) -> bool {
        self.layers.len() == net.layers().len()
            && self
                .layers
                .iter()
                .zip(net.layers())
                .all(|(g, l)| g.weight.dim() == l.weight.dim() && g.bias.len() == l.bias.len())
    }

    pub fn same_shape(&self, other: &GradientSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, c: f64) {
        self.iter_mut().for_each(|v| *v *= c);
    }

    /// `self ← self + c · other`.
    pub fn add_scaled(&mut self, other: &GradientSet, c: f64) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            Zip::from(&mut a.weight).and(&b.weight).for_each(|x, &y| *x += c * y);
            Zip::from(&mut a.bias).and(&b.bias).for_each(|x, &y| *x += c * y);
        }
    }

    /// Entry-wise `self ← f(self, other)`.
    pub fn zip_apply(&mut self, other: &GradientSet, mut f: impl FnMut(f64, f64) -> f64) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            Zip::from(&mut a.weight).and(&b.weight).for_each(|x, &y| *x = f(*x, y));
            Zip::from(&mut a.bias).and(&b.bias).for_each(|x, &y| *x = f(*x, y));
        }
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: GradientSet,
    v: GradientSet,
    step_count: u64,
}

impl Adam {
    pub fn new(net: &Network, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: GradientSet::zeros_like(net),
            v: GradientSet::zeros_like(net),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Computes the bias-corrected update `lr · m̂ / (√v̂ + ε)` and advances
    /// the moment accumulators. The caller subtracts it from the parameters
    /// (optionally transformed first, e.g. by importance gating).
    pub fn compute_update(&mut self, grads: &GradientSet) -> Result<GradientSet> {
        if !grads.same_shape(&self.m) {
            return Err(Error::Precondition("gradients not shape-congruent with optimizer state".into()));
        }
        if !grads.all_finite() {
            return Err(Error::Diverged("non-finite gradient entry".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut update = grads.clone();
        for ((mu, nu), u) in self
            .m
            .iter_mut()
            .zip(self.v.iter_mut())
            .zip(update.iter_mut())
        {
            let g = *u;
            *mu = self.beta1 * *mu + (1.0 - self.beta1) * g;
            *nu = self.beta2 * *nu + (1.0 - self.beta2) * g * g;
            let m_hat = *mu / bc1;
            let v_hat = *nu / bc2;
            *u = self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(update)
    }

    /// One optimizer step: parameters updated in place.
    pub fn step(&mut self, net: &mut Network, grads: &GradientSet) -> Result<()> {
        let update = self.compute_update(grads)?;
        net.apply_update(&update)
    }
}

/// Row-wise numerically-stabilized softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross-entropy of `softmax(logits)` against integer labels, with the
/// gradient with respect to the logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let n = logits.nrows();
    if labels.len() != n {
        return Err(Error::dim(n, labels.len(), "one label per row"));
    }
    if n == 0 {
        return Err(Error::Data("cross_entropy on empty batch".into()));
    }
    let k = logits.ncols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Data(format!("label {bad} out of range for {k} classes")));
    }
    let probs = softmax(logits);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        loss -= probs[[i, label]].max(f64::MIN_POSITIVE).ln();
    }
    loss /= n as f64;
    let mut grad = probs;
    for (i, &label) in labels.iter().enumerate() {
        grad[[i, label]] -= 1.0;
    }
    grad.mapv_inplace(|v| v / n as f64);
    Ok((loss, grad))
}

/// Mean squared error over all entries, with the gradient with respect to
/// the predictions.
pub fn squared_error(preds: &Array2<f64>, targets: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    if preds.dim() != targets.dim() {
        return Err(Error::dim(targets.len(), preds.len(), "prediction/target shapes"));
    }
    let count = preds.len();
    if count == 0 {
        return Err(Error::Data("squared_error on empty input".into()));
    }
    let diff = preds - targets;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count as f64;
    let grad = diff.mapv(|d| 2.0 * d / count as f64);
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use crate::seed;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn tiny_net(seed_val: u64) -> Network {
        let mut rng = seed::rng(seed_val, "nn-test");
        Network::glorot_uniform(
            &[3, 4, 2],
            &[Activation::ReLU, Activation::Identity],
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn forward_zero_parameters_gives_zero_output() {
        let layers = vec![
            Layer {
                weight: Array2::zeros((4, 3)),
                bias: Array1::zeros(4),
                activation: Activation::ReLU,
            },
            Layer {
                weight: Array2::zeros((2, 4)),
                bias: Array1::zeros(2),
                activation: Activation::Identity,
            },
        ];
        let net = Network::from_layers(layers).unwrap();
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]];
        let out = net.infer(&x).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_identity_layer_is_identity() {
        let net = Network::from_layers(vec![Layer {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = array![[1.0, -2.0, 3.0], [4.0, 5.0, -6.0]];
        assert_eq!(net.infer(&x).unwrap(), x);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn forward_matches_scalar_recomputation() {
        // Independent recomputation of W2·relu(W1·x + b1) + b2 with plain loops.
        let net = tiny_net(11);
        let x = array![[0.3, -0.7, 1.2]];
        let out = net.infer(&x).unwrap();

        let l1 = &net.layers()[0];
        let l2 = &net.layers()[1];
        let mut hidden = [0.0; 4];
        for o in 0..4 {
            let mut acc = l1.bias[o];
            for i in 0..3 {
                acc += l1.weight[[o, i]] * x[[0, i]];
            }
            hidden[o] = acc.max(0.0);
        }
        for o in 0..2 {
            let mut acc = l2.bias[o];
            for h in 0..4 {
                acc += l2.weight[[o, h]] * hidden[h];
            }
            assert_abs_diff_eq!(out[[0, o]], acc, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = tiny_net(1);
        let x = Array2::zeros((2, 5));
        assert!(matches!(net.forward(&x), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let net = tiny_net(2);
        let x = array![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]];
        let cache = net.forward(&x).unwrap();
        let bp = net.backward(&cache, &Array2::zeros((2, 2))).unwrap();
        assert!(bp.grads.iter().all(|&g| g == 0.0));
        assert!(bp.input_grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let net = tiny_net(3);
        let x = array![[0.1, -0.2, 0.3]];
        let cache = net.forward(&x).unwrap();
        let upstream = array![[0.7, -0.4]];
        let g1 = net.backward(&cache, &upstream).unwrap().grads;
        let g2 = net.backward(&cache, &(upstream * 3.0)).unwrap().grads;
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert_abs_diff_eq!(3.0 * a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let mut net = tiny_net(4);
        let x = array![[0.1, 0.2, 0.3]];
        let cache = net.forward(&x).unwrap();
        let zero = GradientSet::zeros_like(&net);
        net.apply_update(&zero).unwrap();
        let err = net.backward(&cache, &Array2::zeros((1, 2))).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Squared-error loss through the network vs central differences.
        let mut rng = seed::rng(5, "nn-fd");
        for _ in 0..10 {
            let net = Network::glorot_uniform(
                &[3, 5, 2],
                &[Activation::ReLU, Activation::Identity],
                &mut rng,
            )
            .unwrap();
            let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
            let t = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));

            let cache = net.forward(&x).unwrap();
            let (_, up) = squared_error(cache.output(), &t).unwrap();
            let analytic: Vec<f64> = net.backward(&cache, &up).unwrap().grads.iter().cloned().collect();

            let base = net.flat_params();
            let numeric = gradcheck::central_diff(
                |p| {
                    let mut probe = net.clone();
                    probe.set_flat_params(p).unwrap();
                    let out = probe.infer(&x).unwrap();
                    squared_error(&out, &t).unwrap().0
                },
                &base,
                1e-5,
            );
            let report = gradcheck::compare(&analytic, &numeric);
            assert!(report.max_rel_err < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn adam_zero_gradients_leave_parameters_unchanged() {
        let mut net = tiny_net(6);
        let before = net.flat_params();
        let zeros = GradientSet::zeros_like(&net);
        let mut opt = Adam::new(&net, 1e-3);
        opt.step(&mut net, &zeros).unwrap();
        assert_eq!(before, net.flat_params());
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_first_step_matches_hand_evaluation() {
        // Scalar parameter, g = 1, lr = 0.1: m̂ = 1, v̂ = 1, so the parameter
        // moves by lr / (1 + ε) ≈ 0.1.
        let mut net = Network::from_layers(vec![Layer {
            weight: array![[2.0]],
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }])
        .unwrap();
        let mut grads = GradientSet::zeros_like(&net);
        grads.layers[0].weight[[0, 0]] = 1.0;
        grads.layers[0].bias[0] = 0.0;
        let mut opt = Adam::new(&net, 0.1);
        opt.step(&mut net, &grads).unwrap();
        assert_abs_diff_eq!(net.layers()[0].weight[[0, 0]], 2.0 - 0.1, epsilon = 1e-8);
    }

    #[test]
    fn adam_positive_gradient_strictly_decreases_parameter() {
        let mut net = Network::from_layers(vec![Layer {
            weight: array![[0.5]],
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }])
        .unwrap();
        let mut grads = GradientSet::zeros_like(&net);
        grads.layers[0].weight[[0, 0]] = 0.37;
        let mut opt = Adam::new(&net, 1e-3);
        for _ in 0..5 {
            let before = net.layers()[0].weight[[0, 0]];
            opt.step(&mut net, &grads).unwrap();
            assert!(net.layers()[0].weight[[0, 0]] < before);
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut net = tiny_net(7);
        let mut grads = GradientSet::zeros_like(&net);
        grads.layers[0].weight[[0, 0]] = f64::NAN;
        let mut opt = Adam::new(&net, 1e-3);
        assert!(matches!(opt.step(&mut net, &grads), Err(Error::Diverged(_))));
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let run = || {
            let mut rng = seed::rng(9, "determinism");
            let mut net =
                Network::glorot_uniform(&[3, 4, 2], &[Activation::ReLU, Activation::Identity], &mut rng)
                    .unwrap();
            let mut opt = Adam::new(&net, 1e-3);
            let x = Array2::from_shape_fn((8, 3), |_| rng.random_range(-1.0..1.0));
            let t = Array2::from_shape_fn((8, 2), |_| rng.random_range(-1.0..1.0));
            for _ in 0..20 {
                let cache = net.forward(&x).unwrap();
                let (_, up) = squared_error(cache.output(), &t).unwrap();
                let bp = net.backward(&cache, &up).unwrap();
                opt.step(&mut net, &bp.grads).unwrap();
            }
            net.flat_params()
        };
        let a = run();
        let b = run();
        // Bitwise identical.
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn softmax_symmetric_rows() {
        let out = softmax(&array![[0.0, 0.0]]);
        assert_abs_diff_eq!(out[[0, 0]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out[[0, 1]], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&array![[0.3, -1.2, 2.5]]);
        let b = softmax(&array![[0.3 + 17.0, -1.2 + 17.0, 2.5 + 17.0]]);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn softmax_matches_high_precision_oracle() {
        // Reference values for softmax([1, 2, 3]) computed with 50-digit
        // arithmetic (mpmath).
        let out = softmax(&array![[1.0, 2.0, 3.0]]);
        let expected = [
            0.0900305731703804579980221,
            0.2447284710547976524729596,
            0.6652409557748218895290183,
        ];
        for (got, want) in out.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = seed::rng(10, "ce-fd");
        let logits = Array2::from_shape_fn((5, 3), |_| rng.random_range(-2.0..2.0));
        let labels = vec![0, 2, 1, 1, 0];
        let (_, grad) = cross_entropy(&logits, &labels).unwrap();
        let flat: Vec<f64> = logits.iter().cloned().collect();
        let numeric = gradcheck::central_diff(
            |p| {
                let l = Array2::from_shape_vec((5, 3), p.to_vec()).unwrap();
                cross_entropy(&l, &labels).unwrap().0
            },
            &flat,
            1e-5,
        );
        let analytic: Vec<f64> = grad.iter().cloned().collect();
        assert!(gradcheck::compare(&analytic, &numeric).max_rel_err < 1e-4);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let net = tiny_net(12);
        let text = serde_json::to_string(&net).unwrap();
        let back: Network = serde_json::from_str(&text).unwrap();
        let a = net.flat_params();
        let b = back.flat_params();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
