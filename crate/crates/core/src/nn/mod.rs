//! Minimal dense-network training stack: forward/backward passes over small
//! feedforward networks, the usual losses, and Adam.
//!
//! The stack supports exactly the shapes the experiments need (dense layers,
//! tanh/relu/sigmoid/identity activations, `f64` everywhere) and nothing
//! else. Gradients are exact reverse-mode derivatives of the forward pass;
//! `gradcheck` provides the independent finite-difference route used by the
//! test suites.
//!
//! A network and its optimizer state are owned by a single training run.
//! Networks carry a version counter bumped on every parameter change, and a
//! forward cache records the version it was built against, so backward
//! passes through a stale cache fail loudly instead of silently mixing
//! parameters.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub mod checkpoint;
pub mod gradcheck;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("stale forward cache: parameters changed since the cache was built")]
    StaleCache,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Clamp applied to probabilities before logarithms in [`bce`]. Contrastive
/// training saturates early on easy negatives; the clamp keeps those terms
/// finite.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        }
    }

    /// Derivative expressed through the activation's own output.
    fn slope_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            3 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

/// One dense layer: `y = act(x W^T + b)` with `weight` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_width(&self) -> usize {
        self.weight.nrows()
    }
}

/// A small feedforward network.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
    version: u64,
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Shape("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(NnError::Shape(format!(
                    "layer widths {} -> {} do not chain",
                    pair[0].out_width(),
                    pair[1].in_width()
                )));
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.out_width() {
                return Err(NnError::Shape(format!(
                    "bias length {} does not match out width {}",
                    layer.bias.len(),
                    layer.out_width()
                )));
            }
        }
        Ok(Self { layers, version: 0 })
    }

    /// Random network with weights and biases drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn random(
        widths: &[usize],
        activations: &[Activation],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        if widths.len() != activations.len() + 1 {
            return Err(NnError::Shape(format!(
                "{} widths need {} activations, got {}",
                widths.len(),
                widths.len().saturating_sub(1),
                activations.len()
            )));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (l, &act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight =
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..=bound));
            let bias = Array1::from_shape_fn(fan_out, |_| rng.gen_range(-bound..=bound));
            layers.push(Layer {
                weight,
                bias,
                activation: act,
            });
        }
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().out_width()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Read one parameter by flat index (weights row-major then bias, layer
    /// by layer).
    pub fn param(&self, flat_index: usize) -> f64 {
        let mut idx = flat_index;
        for layer in &self.layers {
            if idx < layer.weight.len() {
                let cols = layer.weight.ncols();
                return layer.weight[[idx / cols, idx % cols]];
            }
            idx -= layer.weight.len();
            if idx < layer.bias.len() {
                return layer.bias[idx];
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index {} out of range", flat_index);
    }

    /// Add `delta` to one parameter by flat index. Invalidates outstanding
    /// forward caches. Used by the finite-difference harness.
    pub fn nudge_param(&mut self, flat_index: usize, delta: f64) {
        let mut idx = flat_index;
        for layer in &mut self.layers {
            if idx < layer.weight.len() {
                let cols = layer.weight.ncols();
                layer.weight[[idx / cols, idx % cols]] += delta;
                self.version += 1;
                return;
            }
            idx -= layer.weight.len();
            if idx < layer.bias.len() {
                layer.bias[idx] += delta;
                self.version += 1;
                return;
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index {} out of range", flat_index);
    }

    /// Forward pass over a batch (rows are samples). Returns the output and
    /// a cache sufficient for one backward pass.
    pub fn forward(&self, batch: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache), NnError> {
        if batch.ncols() != self.input_width() {
            return Err(NnError::Shape(format!(
                "batch width {} does not match input width {}",
                batch.ncols(),
                self.input_width()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for layer in &self.layers {
            let mut pre = current.dot(&layer.weight.t());
            pre += &layer.bias;
            pre.mapv_inplace(|v| layer.activation.apply(v));
            inputs.push(current);
            outputs.push(pre.clone());
            current = pre;
        }
        let cache = ForwardCache {
            version: self.version,
            inputs,
            outputs,
        };
        Ok((current, cache))
    }

    /// Reverse-mode gradients of the forward map. `output_grad` is the loss
    /// gradient with respect to the network output; returns parameter
    /// gradients and the gradient with respect to the input batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &Array2<f64>,
    ) -> Result<(GradBuffer, Array2<f64>), NnError> {
        let (grads, input_grad) = self.backward_impl(cache, output_grad, true)?;
        Ok((grads, input_grad.expect("input gradient requested")))
    }

    /// Like [`DenseNet::backward`] but skips the (sometimes expensive)
    /// gradient with respect to the input batch.
    pub fn backward_params(
        &self,
        cache: &ForwardCache,
        output_grad: &Array2<f64>,
    ) -> Result<GradBuffer, NnError> {
        Ok(self.backward_impl(cache, output_grad, false)?.0)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        output_grad: &Array2<f64>,
        need_input_grad: bool,
    ) -> Result<(GradBuffer, Option<Array2<f64>>), NnError> {
        if cache.version != self.version {
            return Err(NnError::StaleCache);
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(NnError::Shape("cache does not match network depth".into()));
        }
        let last = self.layers.len() - 1;
        if output_grad.dim() != cache.outputs[last].dim() {
            return Err(NnError::Shape(format!(
                "output grad is {:?}, expected {:?}",
                output_grad.dim(),
                cache.outputs[last].dim()
            )));
        }
        let mut grads = GradBuffer::zeros_like(self);
        let mut grad = output_grad.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            // d_pre = grad  (elementwise) act'(output)
            let mut d_pre = grad;
            d_pre.zip_mut_with(&cache.outputs[l], |g, &y| {
                *g *= layer.activation.slope_at_output(y)
            });
            grads.weights[l] = d_pre.t().dot(&cache.inputs[l]);
            grads.biases[l] = d_pre.sum_axis(Axis(0));
            if l > 0 || need_input_grad {
                grad = d_pre.dot(&layer.weight);
            } else {
                return Ok((grads, None));
            }
        }
        Ok((grads, Some(grad)))
    }
}

/// Activations recorded by a forward pass, keyed to the network version
/// that produced them.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

/// Per-parameter gradient accumulator aligned with a [`DenseNet`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradBuffer {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.dim()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.len()))
                .collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &GradBuffer, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.zip_mut_with(b, |x, &y| *x += scale * y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.zip_mut_with(b, |x, &y| *x += scale * y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * factor);
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Flat iteration in the same order as [`DenseNet::param`].
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().copied().chain(b.iter().copied()))
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamParams {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second-moment accumulators for Adam, shaped like the network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub params: AdamParams,
    step: u64,
    m: GradBuffer,
    v: GradBuffer,
}

impl AdamState {
    pub fn new(net: &DenseNet, params: AdamParams) -> Self {
        Self {
            params,
            step: 0,
            m: GradBuffer::zeros_like(net),
            v: GradBuffer::zeros_like(net),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction. Increments the step counter even
/// for all-zero gradients.
pub fn adam_step(
    net: &mut DenseNet,
    grads: &GradBuffer,
    state: &mut AdamState,
) -> Result<(), NnError> {
    if grads.weights.len() != net.layers.len() {
        return Err(NnError::Shape("gradient buffer does not match network".into()));
    }
    state.step += 1;
    let p = state.params;
    let bias1 = 1.0 - p.beta1.powi(state.step as i32);
    let bias2 = 1.0 - p.beta2.powi(state.step as i32);
    for l in 0..net.layers.len() {
        if grads.weights[l].dim() != net.layers[l].weight.dim()
            || grads.biases[l].len() != net.layers[l].bias.len()
        {
            return Err(NnError::Shape(format!("gradient shape mismatch at layer {}", l)));
        }
        update_array(
            &mut net.layers[l].weight,
            &grads.weights[l],
            &mut state.m.weights[l],
            &mut state.v.weights[l],
            p,
            bias1,
            bias2,
        );
        update_array(
            &mut net.layers[l].bias,
            &grads.biases[l],
            &mut state.m.biases[l],
            &mut state.v.biases[l],
            p,
            bias1,
            bias2,
        );
    }
    net.version += 1;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update_array<D: ndarray::Dimension>(
    params: &mut ndarray::Array<f64, D>,
    grads: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    p: AdamParams,
    bias1: f64,
    bias2: f64,
) {
    ndarray::Zip::from(params)
        .and(grads)
        .and(m)
        .and(v)
        .for_each(|param, &g, m, v| {
            *m = p.beta1 * *m + (1.0 - p.beta1) * g;
            *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *param -= p.learning_rate * m_hat / (v_hat.sqrt() + p.epsilon);
        });
}

/// Mean cross-entropy of logits against class labels, with the gradient
/// with respect to the logits.
pub fn cross_entropy_logits(
    logits: &Array2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>), NnError> {
    let (n, k) = logits.dim();
    if labels.len() != n {
        return Err(NnError::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            n
        )));
    }
    if n == 0 {
        return Err(NnError::Shape("empty batch".into()));
    }
    let mut grad = Array2::zeros((n, k));
    let mut loss = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let label = labels[i];
        if label >= k {
            return Err(NnError::Shape(format!("label {} out of range {}", label, k)));
        }
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut total = 0.0;
        for &v in row {
            total += (v - max).exp();
        }
        let log_total = total.ln() + max;
        loss += log_total - row[label];
        for j in 0..k {
            let softmax = (row[j] - log_total).exp();
            grad[[i, j]] = (softmax - if j == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

/// Mean binary cross-entropy of probabilities against 0/1 labels.
/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the
/// logarithm; the gradient is zero where the clamp binds.
pub fn bce(probs: &Array1<f64>, labels: &[f64]) -> Result<(f64, Array1<f64>), NnError> {
    let n = probs.len();
    if labels.len() != n {
        return Err(NnError::Shape(format!("{} labels for {} probs", labels.len(), n)));
    }
    if n == 0 {
        return Err(NnError::Shape("empty batch".into()));
    }
    let mut grad = Array1::zeros(n);
    let mut loss = 0.0;
    for i in 0..n {
        let y = labels[i];
        let raw = probs[i];
        let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad[i] = if raw < PROB_CLAMP || raw > 1.0 - PROB_CLAMP {
            0.0
        } else {
            (-y / p + (1.0 - y) / (1.0 - p)) / n as f64
        };
    }
    Ok((loss / n as f64, grad))
}

/// Mean squared error over all entries, with the gradient with respect to
/// the predictions.
pub fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, Array2<f64>), NnError> {
    if pred.dim() != target.dim() {
        return Err(NnError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let count = pred.len();
    if count == 0 {
        return Err(NnError::Shape("empty batch".into()));
    }
    let diff = pred - target;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / count as f64;
    let grad = diff.mapv(|v| 2.0 * v / count as f64);
    Ok((loss, grad))
}

#[cfg(test)]
mod tests;
