//! Two-layer LSTM sequence classifier with a dense softmax head, trained
//! from scratch in double precision.
//!
//! Gate order inside every `4H` block is input, forget, candidate, output.
//! Kernels are row-major with the `4H` gate axis innermost, so
//! `z = x·W_in + h·W_rec + b`.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use train::{batch_gradient, train, ClassWeights, TrainConfig, TrainOutcome, TrainSample};

use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CLASSES: usize = 2;
const GATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_dim: 24,
            hidden: 12,
            layers: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_input: Vec<f64>,
    pub w_recurrent: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LstmLayer {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmLayer {
            input_dim,
            hidden,
            w_input: vec![0.0; input_dim * GATES * hidden],
            w_recurrent: vec![0.0; hidden * GATES * hidden],
            bias: vec![0.0; GATES * hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Model parameters. The same shape doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub arch: Architecture,
    pub layers: Vec<LstmLayer>,
    pub head: DenseHead,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    out.iter_mut()
        .for_each(|w| *w = rng.random_range(-limit..limit));
}

/// `rows × cols` matrix with orthonormal rows (`rows ≤ cols`), by modified
/// Gram–Schmidt on a Gaussian draw.
fn orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for r in 0..rows {
        for prev in 0..r {
            let dot: f64 = (0..cols)
                .map(|c| out[r * cols + c] * out[prev * cols + c])
                .sum();
            for c in 0..cols {
                out[r * cols + c] -= dot * out[prev * cols + c];
            }
        }
        let norm = (0..cols)
            .map(|c| out[r * cols + c].powi(2))
            .sum::<f64>()
            .sqrt();
        for c in 0..cols {
            out[r * cols + c] /= norm;
        }
    }
}

impl LstmModel {
    pub fn zeros(arch: Architecture) -> Self {
        let layers = (0..arch.layers)
            .map(|l| {
                LstmLayer::zeros(
                    if l == 0 { arch.input_dim } else { arch.hidden },
                    arch.hidden,
                )
            })
            .collect();
        LstmModel {
            arch,
            layers,
            head: DenseHead {
                weights: vec![0.0; arch.hidden * CLASSES],
                bias: vec![0.0; CLASSES],
            },
        }
    }

    /// Glorot-uniform input kernels, orthogonal recurrent kernels, zero
    /// biases except the forget gate at 1.
    pub fn initialize(arch: Architecture, seed: u64) -> Result<Self> {
        if arch.input_dim == 0 || arch.hidden == 0 || arch.layers == 0 {
            return Err(Error::Validation(format!("invalid architecture {arch:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = LstmModel::zeros(arch);
        let h = arch.hidden;
        for layer in &mut model.layers {
            glorot_uniform(&mut rng, layer.input_dim, GATES * h, &mut layer.w_input);
            orthogonal(&mut rng, h, GATES * h, &mut layer.w_recurrent);
            layer.bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        }
        glorot_uniform(&mut rng, h, CLASSES, &mut model.head.weights);
        Ok(model)
    }

    pub fn zeros_like(&self) -> Self {
        LstmModel::zeros(self.arch)
    }

    /// Every parameter tensor in a fixed order (per layer: input kernel,
    /// recurrent kernel, bias; then head weights and bias).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.extend([
                l.w_input.as_slice(),
                l.w_recurrent.as_slice(),
                l.bias.as_slice(),
            ]);
        }
        out.extend([self.head.weights.as_slice(), self.head.bias.as_slice()]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(&mut l.w_input);
            out.push(&mut l.w_recurrent);
            out.push(&mut l.bias);
        }
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Adds `scale · other` into `self`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &LstmModel, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn fingerprint(&self) -> u64 {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        for t in self.tensors() {
            t.iter().for_each(|v| v.to_bits().hash(&mut hasher));
        }
        hasher.finish()
    }

    /// Runs the sequence (`steps × input_dim`, row-major) through the network
    /// from zero states. Returns the class probabilities and the activations
    /// needed by [`LstmModel::backward`].
    pub fn forward(&self, input: &[f64], steps: usize) -> Result<([f64; CLASSES], ForwardCache)> {
        if steps == 0 || input.len() != steps * self.arch.input_dim {
            return Err(Error::Validation(format!(
                "sequence of {} values is not {steps} steps of {} features",
                input.len(),
                self.arch.input_dim
            )));
        }
        let h = self.arch.hidden;
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        let mut layer_input: Vec<f64> = input.to_vec();
        for layer in &self.layers {
            let cache = layer_forward(layer, &layer_input, steps);
            layer_input = cache.hidden.clone();
            layer_caches.push(cache);
        }
        let last = &layer_input[(steps - 1) * h..steps * h];
        let mut logits = [0.0; CLASSES];
        for (c, logit) in logits.iter_mut().enumerate() {
            *logit = self.head.bias[c]
                + (0..h)
                    .map(|j| last[j] * self.head.weights[j * CLASSES + c])
                    .sum::<f64>();
        }
        let probs = softmax(&logits);
        Ok((
            probs,
            ForwardCache {
                fingerprint: self.fingerprint(),
                steps,
                input: input.to_vec(),
                layers: layer_caches,
                logits,
                probs,
            },
        ))
    }

    /// Positive-class probability.
    pub fn predict(&self, input: &[f64], steps: usize) -> Result<f64> {
        Ok(self.forward(input, steps)?.0[1])
    }

    /// Gradients of `weight · −ln p[label]` with respect to every parameter,
    /// by backpropagation through time.
    pub fn backward(&self, cache: &ForwardCache, label: usize, weight: f64) -> Result<LstmModel> {
        if label >= CLASSES {
            return Err(Error::Validation(format!(
                "label {label} is not a class index"
            )));
        }
        if cache.fingerprint != self.fingerprint() || cache.layers.len() != self.layers.len() {
            return Err(Error::Contract(
                "forward cache was produced by different parameters".into(),
            ));
        }
        let h = self.arch.hidden;
        let steps = cache.steps;
        let mut grads = self.zeros_like();

        let mut dlogits = [0.0; CLASSES];
        for (c, d) in dlogits.iter_mut().enumerate() {
            let target = if c == label { 1.0 } else { 0.0 };
            *d = weight * (cache.probs[c] - target);
        }
        let top = cache.layers.last().expect("at least one layer");
        let last = &top.hidden[(steps - 1) * h..steps * h];
        for j in 0..h {
            for c in 0..CLASSES {
                grads.head.weights[j * CLASSES + c] = last[j] * dlogits[c];
            }
        }
        grads.head.bias.copy_from_slice(&dlogits);

        // upstream gradient w.r.t. each timestep's hidden output of the top layer
        let mut d_hidden = vec![0.0; steps * h];
        for j in 0..h {
            d_hidden[(steps - 1) * h + j] = (0..CLASSES)
                .map(|c| self.head.weights[j * CLASSES + c] * dlogits[c])
                .sum();
        }
        for l in (0..self.layers.len()).rev() {
            let layer_input = if l == 0 {
                &cache.input
            } else {
                &cache.layers[l - 1].hidden
            };
            d_hidden = layer_backward(
                &self.layers[l],
                &cache.layers[l],
                layer_input,
                &d_hidden,
                steps,
                &mut grads.layers[l],
            );
        }
        Ok(grads)
    }
}

pub fn softmax(logits: &[f64; CLASSES]) -> [f64; CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|z| (z - max).exp());
    let total: f64 = e.iter().sum();
    e.map(|v| v / total)
}

/// Weighted categorical cross-entropy `−w[label] · ln p[label]`, with the
/// probability clamped to `[1e-12, 1]`.
pub fn loss(probs: &[f64; CLASSES], label: usize, class_weights: &[f64; CLASSES]) -> Result<f64> {
    if label >= CLASSES {
        return Err(Error::Validation(format!(
            "label {label} is not a class index"
        )));
    }
    Ok(-class_weights[label] * probs[label].clamp(1e-12, 1.0).ln())
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Activated gates per step, `steps × 4H`.
    pub gates: Vec<f64>,
    pub cell: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    steps: usize,
    input: Vec<f64>,
    pub layers: Vec<LayerCache>,
    pub logits: [f64; CLASSES],
    pub probs: [f64; CLASSES],
}

fn layer_forward(layer: &LstmLayer, input: &[f64], steps: usize) -> LayerCache {
    let (n, h) = (layer.input_dim, layer.hidden);
    let g4 = GATES * h;
    let mut cache = LayerCache {
        gates: vec![0.0; steps * g4],
        cell: vec![0.0; steps * h],
        cell_tanh: vec![0.0; steps * h],
        hidden: vec![0.0; steps * h],
    };
    let mut z = vec![0.0; g4];
    for t in 0..steps {
        z.copy_from_slice(&layer.bias);
        let x = &input[t * n..(t + 1) * n];
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                let row = &layer.w_input[k * g4..(k + 1) * g4];
                z.iter_mut().zip(row).for_each(|(zi, w)| *zi += xk * w);
            }
        }
        if t > 0 {
            for k in 0..h {
                let hk = cache.hidden[(t - 1) * h + k];
                let row = &layer.w_recurrent[k * g4..(k + 1) * g4];
                z.iter_mut().zip(row).for_each(|(zi, w)| *zi += hk * w);
            }
        }
        let gates = &mut cache.gates[t * g4..(t + 1) * g4];
        for j in 0..h {
            gates[j] = sigmoid(z[j]);
            gates[h + j] = sigmoid(z[h + j]);
            gates[2 * h + j] = z[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid(z[3 * h + j]);
        }
        for j in 0..h {
            let prev = if t > 0 {
                cache.cell[(t - 1) * h + j]
            } else {
                0.0
            };
            let c = gates[h + j] * prev + gates[j] * gates[2 * h + j];
            let ct = c.tanh();
            cache.cell[t * h + j] = c;
            cache.cell_tanh[t * h + j] = ct;
            cache.hidden[t * h + j] = gates[3 * h + j] * ct;
        }
    }
    cache
}

/// Backpropagates `d_hidden` (gradient w.r.t. this layer's outputs) through
/// time, accumulating into `grads` and returning the gradient w.r.t. the
/// layer's inputs.
fn layer_backward(
    layer: &LstmLayer,
    cache: &LayerCache,
    input: &[f64],
    d_hidden: &[f64],
    steps: usize,
    grads: &mut LstmLayer,
) -> Vec<f64> {
    let (n, h) = (layer.input_dim, layer.hidden);
    let g4 = GATES * h;
    let mut d_input = vec![0.0; steps * n];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; g4];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t * g4..(t + 1) * g4];
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let ct = cache.cell_tanh[t * h + j];
            let c_prev = if t > 0 {
                cache.cell[(t - 1) * h + j]
            } else {
                0.0
            };
            let dh = d_hidden[t * h + j] + dh_next[j];
            let dc = dh * o * (1.0 - ct * ct) + dc_next[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = dh * ct * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        grads.bias.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
        let x = &input[t * n..(t + 1) * n];
        for k in 0..n {
            let row = &mut grads.w_input[k * g4..(k + 1) * g4];
            row.iter_mut().zip(&dz).for_each(|(w, d)| *w += x[k] * d);
            let wrow = &layer.w_input[k * g4..(k + 1) * g4];
            d_input[t * n + k] = wrow.iter().zip(&dz).map(|(w, d)| w * d).sum();
        }
        for k in 0..h {
            let wrow = &layer.w_recurrent[k * g4..(k + 1) * g4];
            dh_next[k] = wrow.iter().zip(&dz).map(|(w, d)| w * d).sum();
            if t > 0 {
                let hk = cache.hidden[(t - 1) * h + k];
                let row = &mut grads.w_recurrent[k * g4..(k + 1) * g4];
                row.iter_mut().zip(&dz).for_each(|(w, d)| *w += hk * d);
            }
        }
    }
    d_input
}
