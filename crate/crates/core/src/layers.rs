//! Differentiable building blocks with explicit forward and backward passes.
//!
//! Layers process one instance at a time. `forward` caches whatever the
//! backward pass needs; `backward` consumes the upstream gradient, adds the
//! parameter gradients into each [`Param::grad`] buffer and returns the
//! gradient with respect to the layer input. A mini-batch is a loop over
//! instances followed by [`Param::scale_grad`] and an optimizer step.
//!
//! Feature-map length for a kernel of size `k` and stride `s` over an input of
//! length `m` (no padding) is `floor((m - k) / s) + 1`; the last tap then reads
//! index `k + (c - 1) s <= m` (1-based).

use crate::error::{Error, Result};
use crate::numeric::{dot, Matrix, Rng};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before taking logs.
pub const BCE_CLAMP: f64 = 1e-12;

fn backward_before_forward(layer: &str) -> Error {
    Error::contract(format!("{layer}: backward called before forward"))
}

fn check_len(op: &'static str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape {
            op,
            left: (want, 1),
            right: (got, 1),
        });
    }
    Ok(())
}

/// Logistic function, stable for large `|z|`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_vec(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| sigmoid(v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => out * (1.0 - out),
        }
    }
}

/// Stateful sigmoid layer; caches its output for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Sigmoid {
    output: Option<Vec<f64>>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, z: &[f64]) -> Vec<f64> {
        let out = sigmoid_vec(z);
        self.output = Some(out.clone());
        out
    }

    pub fn backward(&self, upstream: &[f64]) -> Result<Vec<f64>> {
        let out = self
            .output
            .as_ref()
            .ok_or_else(|| backward_before_forward("sigmoid"))?;
        check_len("sigmoid backward", upstream.len(), out.len())?;
        Ok(out
            .iter()
            .zip(upstream)
            .map(|(&o, &g)| g * o * (1.0 - o))
            .collect())
    }
}

/// Mean binary cross-entropy over the label dimension.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    check_len("bce_loss", y.len(), p.len())?;
    if p.is_empty() {
        return Err(Error::contract("bce_loss: empty label vector"));
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok((total / p.len() as f64).max(0.0))
}

/// Gradient of [`bce_loss`] with respect to the probabilities.
pub fn bce_grad(p: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_len("bce_grad", y.len(), p.len())?;
    let d = p.len() as f64;
    Ok(p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                // clamped region is flat
                return 0.0;
            }
            (-(y / p) + (1.0 - y) / (1.0 - p)) / d
        })
        .collect())
}

/// Gradient of `bce_loss(sigmoid(z), y)` with respect to the logits `z`.
///
/// Equal to chaining [`bce_grad`] through the sigmoid, but without the
/// cancellation that occurs when `p` saturates.
pub fn bce_logit_grad(p: &[f64], y: &[f64]) -> Vec<f64> {
    let d = p.len() as f64;
    p.iter().zip(y).map(|(&p, &y)| (p - y) / d).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient of weights (never biases)
    /// before the moment updates.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamConfig {
            learning_rate,
            weight_decay,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment accumulators for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One bias-corrected Adam update of `param` in place.
    pub fn step(
        &mut self,
        cfg: &AdamConfig,
        param: &mut [f64],
        grad: &[f64],
        kind: ParamKind,
    ) -> Result<()> {
        check_len("adam_step", grad.len(), param.len())?;
        check_len("adam_step", self.m.len(), param.len())?;
        self.t += 1;
        let decay = match kind {
            ParamKind::Weight => cfg.weight_decay,
            ParamKind::Bias => 0.0,
        };
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..param.len() {
            let g = grad[i] + decay * param[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            param[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

/// A parameter tensor (flattened), its gradient accumulator and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub kind: ParamKind,
    pub adam: AdamState,
}

impl Param {
    pub fn new(value: Vec<f64>, kind: ParamKind) -> Self {
        let n = value.len();
        Param {
            value,
            grad: vec![0.0; n],
            kind,
            adam: AdamState::new(n),
        }
    }

    pub fn zeros(len: usize, kind: ParamKind) -> Self {
        Param::new(vec![0.0; len], kind)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale_grad(&mut self, factor: f64) {
        self.grad.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn step(&mut self, cfg: &AdamConfig) -> Result<()> {
        self.adam.step(cfg, &mut self.value, &self.grad, self.kind)
    }
}

/// Uniform Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fully connected layer `W x + b` with `W` stored row-major as `out × in`.
#[derive(Clone, Debug)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    pub weights: Param,
    pub bias: Param,
    input: Option<Vec<f64>>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: Param::zeros(in_dim * out_dim, ParamKind::Weight),
            bias: Param::zeros(out_dim, ParamKind::Bias),
            input: None,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut layer = Dense::zeros(in_dim, out_dim);
        let limit = glorot_limit(in_dim, out_dim);
        layer.weights.value = rng.uniform_vec(-limit, limit, in_dim * out_dim)?;
        Ok(layer)
    }

    pub fn from_parts(weights: &Matrix, bias: Vec<f64>) -> Result<Self> {
        let (out_dim, in_dim) = weights.shape();
        check_len("dense bias", bias.len(), out_dim)?;
        Ok(Dense {
            in_dim,
            out_dim,
            weights: Param::new(weights.as_slice().to_vec(), ParamKind::Weight),
            bias: Param::new(bias, ParamKind::Bias),
            input: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// `W x + b` without caching (inference path).
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("dense forward", x.len(), self.in_dim)?;
        Ok(self
            .weights
            .value
            .chunks_exact(self.in_dim.max(1))
            .take(self.out_dim)
            .zip(&self.bias.value)
            .map(|(row, &b)| if self.in_dim == 0 { b } else { dot(row, x) + b })
            .collect())
    }

    pub fn forward(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let out = self.apply(x)?;
        self.input = Some(x.to_vec());
        Ok(out)
    }

    pub fn backward(&mut self, upstream: &[f64]) -> Result<Vec<f64>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| backward_before_forward("dense"))?;
        check_len("dense backward", upstream.len(), self.out_dim)?;
        let mut dx = vec![0.0; self.in_dim];
        for (o, &g) in upstream.iter().enumerate() {
            self.bias.grad[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = o * self.in_dim;
            let w = &self.weights.value[row..row + self.in_dim];
            let gw = &mut self.weights.grad[row..row + self.in_dim];
            for i in 0..self.in_dim {
                gw[i] += g * x[i];
                dx[i] += g * w[i];
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weights, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weights, &self.bias]
    }
}

/// Number of valid kernel placements over an unpadded input.
pub fn feature_map_len(input_len: usize, size: usize, stride: usize) -> Option<usize> {
    if size == 0 || stride == 0 || size > input_len {
        return None;
    }
    Some((input_len - size) / stride + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub values: Vec<f64>,
    /// Position selected by [`global_maxpool`].
    pub argmax: Option<usize>,
}

/// Single-channel 1-D convolution kernel with a scalar bias.
#[derive(Clone, Debug)]
pub struct Conv1DKernel {
    size: usize,
    stride: usize,
    pub weights: Param,
    pub bias: Param,
}

impl Conv1DKernel {
    pub fn new(weights: Vec<f64>, bias: f64, stride: usize) -> Result<Self> {
        if weights.is_empty() || stride == 0 {
            return Err(Error::contract(
                "conv1d: kernel size and stride must be at least 1",
            ));
        }
        Ok(Conv1DKernel {
            size: weights.len(),
            stride,
            weights: Param::new(weights, ParamKind::Weight),
            bias: Param::new(vec![bias], ParamKind::Bias),
        })
    }

    /// Glorot-uniform taps (fan-in = fan-out = size for one channel), zero bias.
    pub fn glorot(size: usize, stride: usize, rng: &mut Rng) -> Result<Self> {
        let limit = glorot_limit(size, size);
        Conv1DKernel::new(rng.uniform_vec(-limit, limit, size)?, 0.0, stride)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn param_count(&self) -> usize {
        self.size + 1
    }

    fn output_len(&self, input_len: usize) -> Result<usize> {
        feature_map_len(input_len, self.size, self.stride).ok_or_else(|| {
            Error::contract(format!(
                "conv1d: kernel larger than input ({} > {input_len})",
                self.size
            ))
        })
    }

    #[inline]
    fn pre_activation(&self, x: &[f64], j: usize) -> f64 {
        let start = j * self.stride;
        self.bias.value[0] + dot(&self.weights.value, &x[start..start + self.size])
    }

    /// `o_j = act(bias + sum_i w_i x_{i + j s})` for every valid position `j`.
    pub fn forward(&self, x: &[f64], activation: Activation) -> Result<FeatureMap> {
        let c = self.output_len(x.len())?;
        Ok(FeatureMap {
            values: (0..c)
                .map(|j| activation.apply(self.pre_activation(x, j)))
                .collect(),
            argmax: None,
        })
    }

    /// Backward through the full feature map. Accumulates into the kernel's
    /// gradients and returns the input gradient.
    pub fn backward(
        &mut self,
        x: &[f64],
        fm: &FeatureMap,
        activation: Activation,
        upstream: &[f64],
    ) -> Result<Vec<f64>> {
        let c = self.output_len(x.len())?;
        check_len("conv1d backward", fm.values.len(), c)?;
        check_len("conv1d backward", upstream.len(), c)?;
        let mut dx = vec![0.0; x.len()];
        for j in 0..c {
            let dz = upstream[j] * activation.derivative_from_output(fm.values[j]);
            self.accumulate_tap(x, j, dz, &mut dx);
        }
        Ok(dx)
    }

    #[inline]
    fn accumulate_tap(&mut self, x: &[f64], j: usize, dz: f64, dx: &mut [f64]) {
        if dz == 0.0 {
            return;
        }
        let start = j * self.stride;
        self.bias.grad[0] += dz;
        for i in 0..self.size {
            self.weights.grad[i] += dz * x[start + i];
            dx[start + i] += dz * self.weights.value[i];
        }
    }
}

/// Max over the feature map; records the lowest index attaining it.
pub fn global_maxpool(fm: &mut FeatureMap) -> Result<f64> {
    let (idx, max) = argmax(&fm.values)
        .ok_or_else(|| Error::contract("global_maxpool: empty feature map"))?;
    fm.argmax = Some(idx);
    Ok(max)
}

/// Routes the upstream gradient entirely to the recorded argmax.
pub fn maxpool_backward(fm: &FeatureMap, upstream: f64) -> Result<Vec<f64>> {
    let idx = fm
        .argmax
        .ok_or_else(|| backward_before_forward("global_maxpool"))?;
    let mut grad = vec![0.0; fm.values.len()];
    grad[idx] = upstream;
    Ok(grad)
}

/// First index of the maximum (strict `>` keeps the lowest index on ties).
fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    let mut it = values.iter().copied().enumerate();
    let first = it.next()?;
    Some(it.fold(first, |best, (i, v)| if v > best.1 { (i, v) } else { best }))
}

#[derive(Clone, Debug)]
struct BankCache {
    input: Vec<f64>,
    argmax: Vec<usize>,
    pooled: Vec<f64>,
}

/// A set of kernels, each followed by an activation and global max-pooling,
/// producing one scalar per kernel.
///
/// The activation must be monotone non-decreasing: the maximum is located on
/// pre-activations and the activation applied once, which equals pooling the
/// activated map without evaluating the activation at every position.
#[derive(Clone, Debug)]
pub struct ConvPoolBank {
    pub kernels: Vec<Conv1DKernel>,
    activation: Activation,
    cache: Option<BankCache>,
}

impl ConvPoolBank {
    pub fn new(kernels: Vec<Conv1DKernel>, activation: Activation) -> Self {
        ConvPoolBank {
            kernels,
            activation,
            cache: None,
        }
    }

    /// Kernels of sizes `1..=count`, all with stride 1.
    pub fn multi_scale(count: usize, rng: &mut Rng) -> Result<Self> {
        let kernels = (1..=count)
            .map(|size| Conv1DKernel::glorot(size, 1, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConvPoolBank::new(kernels, Activation::Sigmoid))
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.kernels.iter().map(Conv1DKernel::param_count).sum()
    }

    fn pool_all(&self, x: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
        let mut positions = Vec::with_capacity(self.kernels.len());
        let mut pooled = Vec::with_capacity(self.kernels.len());
        for kernel in &self.kernels {
            let c = kernel.output_len(x.len())?;
            let (j, z) = (0..c)
                .map(|j| (j, kernel.pre_activation(x, j)))
                .fold((0, f64::NEG_INFINITY), |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                });
            positions.push(j);
            pooled.push(self.activation.apply(z));
        }
        Ok((positions, pooled))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.pool_all(x)?.1)
    }

    pub fn forward(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let (argmax, pooled) = self.pool_all(x)?;
        self.cache = Some(BankCache {
            input: x.to_vec(),
            argmax,
            pooled: pooled.clone(),
        });
        Ok(pooled)
    }

    pub fn backward(&mut self, upstream: &[f64]) -> Result<Vec<f64>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| backward_before_forward("conv bank"))?;
        check_len("conv bank backward", upstream.len(), self.kernels.len())?;
        let mut dx = vec![0.0; cache.input.len()];
        for (k, kernel) in self.kernels.iter_mut().enumerate() {
            let dz = upstream[k] * self.activation.derivative_from_output(cache.pooled[k]);
            kernel.accumulate_tap(&cache.input, cache.argmax[k], dz, &mut dx);
        }
        Ok(dx)
    }

    /// Argmax position chosen per kernel in the last `forward`.
    pub fn last_argmax(&self) -> Option<&[usize]> {
        self.cache.as_ref().map(|c| c.argmax.as_slice())
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during training,
/// evaluation is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    rate: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::contract(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Dropout { rate, mask: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&mut self, x: &[f64], rng: &mut Rng, training: bool) -> Vec<f64> {
        if !training || self.rate == 0.0 {
            self.mask = Some(vec![1.0; x.len()]);
            return x.to_vec();
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = x
            .iter()
            .map(|_| if rng.bernoulli(self.rate) { 0.0 } else { keep })
            .collect();
        let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.mask = Some(mask);
        out
    }

    pub fn backward(&self, upstream: &[f64]) -> Result<Vec<f64>> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| backward_before_forward("dropout"))?;
        check_len("dropout backward", upstream.len(), mask.len())?;
        Ok(upstream.iter().zip(mask).map(|(g, m)| g * m).collect())
    }
}

/// Free-function form of dropout for callers without a layer instance.
pub fn dropout(x: &[f64], rate: f64, rng: &mut Rng, training: bool) -> Result<Vec<f64>> {
    Ok(Dropout::new(rate)?.forward(x, rng, training))
}
