//! Small dense networks with hand-written reverse-mode gradients.
//!
//! Everything is `f64` and batched: a batch of `rows` inputs is a row-major
//! `rows x in_dim` slice. A network records the intermediates of its last
//! training forward pass and `backward` consumes them, accumulating parameter
//! gradients into per-layer buffers until `zero_grad` is called.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::{standard_normal, uniform_open, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `W z + b`
    Standard,
    /// `exp(W) z + b`; effective weights are strictly positive.
    Exponentiated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    /// Clamp to `[0, bound]`.
    ReluN {
        bound: f64,
    },
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => libm::tanh(z),
            Activation::ReluN { bound } => z.clamp(0.0, bound),
        }
    }

    /// Derivative with respect to the pre-activation. ReLU-N uses 0 at both kinks.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = libm::tanh(z);
                1.0 - t * t
            }
            Activation::ReluN { bound } => {
                if z > 0.0 && z < bound {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn relu_n(z: &[f64], bound: f64) -> Vec<f64> {
    z.iter().map(|&v| Activation::ReluN { bound }.apply(v)).collect()
}

/// Fixed elementwise map applied to raw inputs before the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputTransform {
    #[default]
    Identity,
    /// `sign(x) ln(1 + |x|)`, strictly increasing.
    Symlog,
}

impl InputTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            InputTransform::Identity => x,
            InputTransform::Symlog => {
                let m = libm::log1p(x.abs());
                if x < 0.0 {
                    -m
                } else {
                    m
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            InputTransform::Identity => 1.0,
            InputTransform::Symlog => 1.0 / (1.0 + x.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub mode: WeightMode,
    /// `out_dim x in_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    #[serde(skip)]
    pub grad_weights: Vec<f64>,
    #[serde(skip)]
    pub grad_bias: Vec<f64>,
    #[serde(skip)]
    cache: Option<LayerCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerCache {
    input: Vec<f64>,
    rows: usize,
    effective: Vec<f64>,
}

impl DenseLayer {
    pub fn new(in_dim: usize, out_dim: usize, mode: WeightMode, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::ShapeMismatch { expected: in_dim * out_dim, actual: weights.len() });
        }
        if bias.len() != out_dim {
            return Err(Error::ShapeMismatch { expected: out_dim, actual: bias.len() });
        }
        Ok(DenseLayer {
            in_dim,
            out_dim,
            mode,
            weights,
            bias,
            grad_weights: vec![0.0; in_dim * out_dim],
            grad_bias: vec![0.0; out_dim],
            cache: None,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, mode: WeightMode) -> Self {
        DenseLayer::new(in_dim, out_dim, mode, vec![0.0; in_dim * out_dim], vec![0.0; out_dim])
            .expect("shapes are consistent by construction")
    }

    /// Weights actually multiplied with the input.
    pub fn effective_weights(&self) -> Vec<f64> {
        match self.mode {
            WeightMode::Standard => self.weights.clone(),
            WeightMode::Exponentiated => self.weights.iter().map(|&w| libm::exp(w)).collect(),
        }
    }

    fn check_input(&self, input: &[f64], rows: usize) -> Result<()> {
        if input.len() != rows * self.in_dim {
            return Err(Error::ShapeMismatch { expected: rows * self.in_dim, actual: input.len() });
        }
        Ok(())
    }

    fn affine(&self, effective: &[f64], input: &[f64], rows: usize) -> Vec<f64> {
        let (n_in, n_out) = (self.in_dim, self.out_dim);
        let mut out = vec![0.0; rows * n_out];
        for r in 0..rows {
            let x = &input[r * n_in..(r + 1) * n_in];
            let y = &mut out[r * n_out..(r + 1) * n_out];
            for (o, y_o) in y.iter_mut().enumerate() {
                let w = &effective[o * n_in..(o + 1) * n_in];
                *y_o = self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }

    pub fn forward(&self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.check_input(input, rows)?;
        let effective = self.effective_weights();
        Ok(self.affine(&effective, input, rows))
    }

    /// Forward pass that records what `backward` needs.
    pub fn forward_train(&mut self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.check_input(input, rows)?;
        let effective = self.effective_weights();
        let out = self.affine(&effective, input, rows);
        self.cache = Some(LayerCache { input: input.to_vec(), rows, effective });
        Ok(out)
    }

    /// Accumulates parameter gradients for the upstream gradient `grad_out`
    /// and returns the gradient with respect to the layer input.
    pub fn backward(&mut self, grad_out: &[f64]) -> Result<Vec<f64>> {
        let cache = self.cache.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let (n_in, n_out, rows) = (self.in_dim, self.out_dim, cache.rows);
        if grad_out.len() != rows * n_out {
            return Err(Error::ShapeMismatch { expected: rows * n_out, actual: grad_out.len() });
        }
        if self.grad_weights.len() != n_in * n_out {
            self.grad_weights = vec![0.0; n_in * n_out];
            self.grad_bias = vec![0.0; n_out];
        }
        let mut grad_in = vec![0.0; rows * n_in];
        for r in 0..rows {
            let x = &cache.input[r * n_in..(r + 1) * n_in];
            let dy = &grad_out[r * n_out..(r + 1) * n_out];
            let dx = &mut grad_in[r * n_in..(r + 1) * n_in];
            for (o, &d) in dy.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                self.grad_bias[o] += d;
                let gw = &mut self.grad_weights[o * n_in..(o + 1) * n_in];
                let w = &cache.effective[o * n_in..(o + 1) * n_in];
                match self.mode {
                    WeightMode::Standard => {
                        for (g, &xi) in gw.iter_mut().zip(x) {
                            *g += d * xi;
                        }
                    }
                    // d exp(W_oi) / d W_oi = exp(W_oi)
                    WeightMode::Exponentiated => {
                        for ((g, &xi), &wi) in gw.iter_mut().zip(x).zip(w) {
                            *g += d * xi * wi;
                        }
                    }
                }
                for (g, &wi) in dx.iter_mut().zip(w) {
                    *g += d * wi;
                }
            }
        }
        Ok(grad_in)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.clear();
        self.grad_weights.resize(self.in_dim * self.out_dim, 0.0);
        self.grad_bias.clear();
        self.grad_bias.resize(self.out_dim, 0.0);
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// A stack of dense layers, each followed by its activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_transform: InputTransform,
    pub layers: Vec<DenseLayer>,
    pub activations: Vec<Activation>,
    #[serde(skip)]
    trace: Option<Trace>,
}

#[derive(Debug, Clone, PartialEq)]
struct Trace {
    raw_input: Vec<f64>,
    pre_activations: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(input_transform: InputTransform, layers: Vec<DenseLayer>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() || layers.len() != activations.len() {
            return Err(Error::ShapeMismatch { expected: layers.len(), actual: activations.len() });
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::ShapeMismatch { expected: pair[0].out_dim, actual: pair[1].in_dim });
            }
        }
        Ok(Network { input_transform, layers, activations, trace: None })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    fn transformed(&self, input: &[f64]) -> Vec<f64> {
        input.iter().map(|&x| self.input_transform.apply(x)).collect()
    }

    pub fn forward(&self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        let mut z = self.transformed(input);
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            z = layer.forward(&z, rows)?;
            z.iter_mut().for_each(|v| *v = act.apply(*v));
        }
        Ok(z)
    }

    pub fn forward_train(&mut self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        let mut z = self.transformed(input);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for (layer, act) in self.layers.iter_mut().zip(&self.activations) {
            let pre = layer.forward_train(&z, rows)?;
            z = pre.iter().map(|&v| act.apply(v)).collect();
            pre_activations.push(pre);
        }
        self.trace = Some(Trace { raw_input: input.to_vec(), pre_activations });
        Ok(z)
    }

    /// Backpropagates `grad_out` through the last training forward pass and
    /// returns the gradient with respect to the raw input.
    pub fn backward(&mut self, grad_out: &[f64]) -> Result<Vec<f64>> {
        let trace = self.trace.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let mut grad = grad_out.to_vec();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let pre = &trace.pre_activations[i];
            if grad.len() != pre.len() {
                return Err(Error::ShapeMismatch { expected: pre.len(), actual: grad.len() });
            }
            let act = self.activations[i];
            grad.iter_mut().zip(pre).for_each(|(g, &z)| *g *= act.derivative(z));
            grad = layer.backward(&grad)?;
        }
        let transform = self.input_transform;
        grad.iter_mut().zip(&trace.raw_input).for_each(|(g, &x)| *g *= transform.derivative(x));
        Ok(grad)
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(DenseLayer::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// All parameters in a fixed order: per layer, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch { expected: self.param_count(), actual: flat.len() });
        }
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            layer.weights.iter_mut().chain(layer.bias.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    /// Gradients in the same order as [`Network::params`].
    pub fn grads(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| {
                let n_w = l.weights.len();
                let n_b = l.bias.len();
                (0..n_w)
                    .map(move |i| l.grad_weights.get(i).copied().unwrap_or(0.0))
                    .chain((0..n_b).map(move |i| l.grad_bias.get(i).copied().unwrap_or(0.0)))
            })
            .collect()
    }

    pub fn grad_sq_norm(&self) -> f64 {
        self.layers.iter().flat_map(|l| l.grad_weights.iter().chain(&l.grad_bias)).map(|g| g * g).sum()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.grad_weights.iter_mut().chain(l.grad_bias.iter_mut()).for_each(|g| *g *= factor);
        }
    }

    /// Inference-only copy with exponentiated weights materialized as
    /// standard weights. Forward outputs are bit-identical to the original;
    /// the copy must not be trained.
    pub fn frozen(&self) -> Network {
        let layers = self
            .layers
            .iter()
            .map(|l| DenseLayer {
                mode: WeightMode::Standard,
                weights: l.effective_weights(),
                grad_weights: Vec::new(),
                grad_bias: Vec::new(),
                cache: None,
                ..l.clone()
            })
            .collect();
        Network { input_transform: self.input_transform, layers, activations: self.activations.clone(), trace: None }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|p| p.is_finite()))
    }

    /// Monotone network: every layer uses exponentiated weights, hidden
    /// layers use ReLU-N and the scalar output layer has no activation.
    ///
    /// Effective weights start near `1/fan_in`. First-layer biases are spread
    /// over `[-first_bias_spread, first_bias_spread]` so the clamp units cover
    /// a range of input levels instead of saturating together. The output
    /// layer's effective weights start near `output_scale / fan_in`, so the
    /// output initially spans about `[0, output_scale * bound]`.
    pub fn monotone(
        in_dim: usize,
        hidden: &[usize],
        bound: f64,
        first_bias_spread: f64,
        output_scale: f64,
        input_transform: InputTransform,
        rng: &mut Stream,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut activations = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = in_dim;
        for (i, &width) in hidden.iter().chain(core::iter::once(&1)).enumerate() {
            let scale = if i == hidden.len() { output_scale } else { 1.0 };
            let center = libm::log(scale / fan_in as f64);
            let weights = (0..fan_in * width).map(|_| center + 0.1 * standard_normal(rng)).collect();
            let bias = if i == 0 && first_bias_spread > 0.0 {
                (0..width).map(|_| bound * uniform_open(rng, -first_bias_spread, first_bias_spread)).collect()
            } else {
                vec![0.0; width]
            };
            layers.push(DenseLayer::new(fan_in, width, WeightMode::Exponentiated, weights, bias)?);
            activations.push(if i < hidden.len() { Activation::ReluN { bound } } else { Activation::Identity });
            fan_in = width;
        }
        Network::new(input_transform, layers, activations)
    }

    /// Tanh MLP with orthogonal initialization: gain `sqrt(2)` on hidden
    /// layers and `output_gain` on the output layer. Biases start at zero.
    pub fn mlp(
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        output_gain: f64,
        input_transform: InputTransform,
        rng: &mut Stream,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut activations = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = in_dim;
        for (i, &width) in hidden.iter().chain(core::iter::once(&out_dim)).enumerate() {
            let last = i == hidden.len();
            let gain = if last { output_gain } else { core::f64::consts::SQRT_2 };
            let weights = orthogonal(width, fan_in, gain, rng);
            layers.push(DenseLayer::new(fan_in, width, WeightMode::Standard, weights, vec![0.0; width])?);
            activations.push(if last { Activation::Identity } else { Activation::Tanh });
            fan_in = width;
        }
        Network::new(input_transform, layers, activations)
    }
}

/// `rows x cols` matrix with orthonormal rows (or columns, whichever is
/// fewer), scaled by `gain`. Gram-Schmidt on a Gaussian draw.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Stream) -> Vec<f64> {
    let (n, m) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    // n orthonormal vectors of length m
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| standard_normal(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
        }
        let norm = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain * if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    out
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| libm::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(z.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
    z.iter().map(|&v| v - lse).collect()
}

/// `-sum_i p_i ln p_i` of `softmax(z)`.
pub fn entropy_of_logits(z: &[f64]) -> f64 {
    let logp = log_softmax(z);
    -logp.iter().map(|&lp| libm::exp(lp) * lp).sum::<f64>()
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, num_params: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    /// One update of `params` given `grads` (same order and length).
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::ShapeMismatch { expected: self.first_moment.len(), actual: grads.len() });
        }
        self.step += 1;
        let t = self.step as f64;
        let correction1 = 1.0 - libm::pow(self.beta1, t);
        let correction2 = 1.0 - libm::pow(self.beta2, t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first_moment).zip(&mut self.second_moment) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon);
        }
        Ok(())
    }

    /// Applies one update to a network from its accumulated gradients.
    pub fn step_network(&mut self, net: &mut Network) -> Result<()> {
        let mut params = net.params();
        let grads = net.grads();
        self.update(&mut params, &grads)?;
        net.set_params(&params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn exponentiated_zero_weights_sum_inputs() {
        let layer = DenseLayer::zeros(2, 2, WeightMode::Exponentiated);
        assert_eq!(layer.forward(&[1.0, 2.0], 1).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn standard_identity_layer() {
        let layer = DenseLayer::new(2, 2, WeightMode::Standard, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2]).unwrap();
        assert_eq!(layer.forward(&[-1.5, 4.0, 2.0, 0.0], 2).unwrap(), vec![-1.5, 4.0, 2.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let layer = DenseLayer::zeros(3, 2, WeightMode::Standard);
        assert_eq!(layer.forward(&[1.0, 2.0], 1), Err(Error::ShapeMismatch { expected: 3, actual: 2 }));
    }

    #[test]
    fn relu_n_clamps() {
        assert_eq!(relu_n(&[-0.5, 0.3, 2.0], 1.0), vec![0.0, 0.3, 1.0]);
        assert_eq!(relu_n(&[0.0, 0.7, 2.0], 2.0), vec![0.0, 0.7, 2.0]);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[libm::log(1.0), libm::log(3.0)]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let a = softmax(&[0.3, -1.2, 2.0]);
        let b = softmax(&[100.3, 98.8, 102.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(softmax(&[1000.0, 0.0]).iter().all(|p| p.is_finite()));
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy_of_logits(&[0.0; 4]) - libm::log(4.0)).abs() < 1e-12);
        assert!(entropy_of_logits(&[50.0, 0.0, 0.0]) < 1e-18);
    }

    #[test]
    fn backward_requires_forward() {
        let mut layer = DenseLayer::zeros(1, 1, WeightMode::Standard);
        assert_eq!(layer.backward(&[1.0]), Err(Error::BackwardBeforeForward));
        let mut net = Network::mlp(2, &[3], 1, 1.0, InputTransform::Identity, &mut stream(0)).unwrap();
        assert_eq!(net.backward(&[1.0]), Err(Error::BackwardBeforeForward));
    }

    #[test]
    fn exponentiated_scalar_gradient() {
        let mut layer = DenseLayer::zeros(1, 1, WeightMode::Exponentiated);
        layer.forward_train(&[1.0], 1).unwrap();
        let dx = layer.backward(&[1.0]).unwrap();
        assert_eq!(layer.grad_weights, vec![1.0]);
        assert_eq!(layer.grad_bias, vec![1.0]);
        assert_eq!(dx, vec![1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = stream(4);
        let mut net = Network::monotone(3, &[8, 8, 8, 8], 1.0, 3.0, 1.0, InputTransform::Symlog, &mut rng).unwrap();
        net.forward_train(&[0.5, -2.0, 1.0, 3.0, 0.0, -1.0], 2).unwrap();
        net.backward(&[0.0, 0.0]).unwrap();
        assert!(net.grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn params_roundtrip_through_flat_vector() {
        let mut rng = stream(8);
        let mut net = Network::mlp(4, &[5], 2, 0.01, InputTransform::Identity, &mut rng).unwrap();
        let mut flat = net.params();
        assert_eq!(flat.len(), net.param_count());
        flat[0] += 1.0;
        net.set_params(&flat).unwrap();
        assert_eq!(net.params(), flat);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let w = orthogonal(4, 6, 1.0, &mut stream(3));
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..6).map(|c| w[i * 6 + c] * w[j * 6 + c]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut adam = Adam::new(0.01, 3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.update(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m_hat = g and v_hat = g^2 after one step, so the update is
        // lr * g / (|g| + eps).
        let mut adam = Adam::new(0.003, 2);
        let mut p = vec![0.0, 0.0];
        adam.update(&mut p, &[0.4, -7.0]).unwrap();
        assert!((p[0] + 0.003 * 0.4 / (0.4 + 1e-8)).abs() < 1e-15);
        assert!((p[1] - 0.003 * 7.0 / (7.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut adam = Adam::new(0.01, 2);
            let mut p = vec![0.3, 0.1];
            for i in 0..50 {
                let g = [p[0] - 1.0 + 0.01 * i as f64, 2.0 * p[1]];
                adam.update(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
