//! Minimal feed-forward risk network with exact gradients and Adam.
//!
//! The network maps a feature vector to a scalar risk score: standardize the
//! input, pass it through ReLU + inverted-dropout hidden layers, and finish
//! with a bias-free linear layer. No hidden layers means a plain linear
//! score on the standardized input. Everything is hand-rolled so gradients
//! are exact and runs are reproducible from a seed.

use alloc::vec;
use alloc::vec::Vec;

use crate::num;
use crate::rng::Rng;
use crate::{Error, Result};

/// Architecture and initialization seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    /// Hidden layer widths; empty gives a linear model.
    pub hidden_dims: Vec<usize>,
    /// Dropout rate applied after each hidden ReLU, in `[0, 1)`.
    pub dropout_rate: f64,
    pub seed: u64,
}

impl MlpConfig {
    /// Two hidden layers of 64 and 32 units with dropout 0.2.
    pub fn new(input_dim: usize, seed: u64) -> Self {
        MlpConfig {
            input_dim,
            hidden_dims: vec![64, 32],
            dropout_rate: 0.2,
            seed,
        }
    }

    /// Linear (no hidden layer) configuration.
    pub fn linear(input_dim: usize, seed: u64) -> Self {
        MlpConfig {
            input_dim,
            hidden_dims: Vec::new(),
            dropout_rate: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Invalid("input_dim must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Invalid(alloc::format!(
                "dropout_rate must be in [0,1), got {}",
                self.dropout_rate
            )));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Invalid("hidden layer width must be positive".into()));
        }
        Ok(())
    }

    /// Layer input/output sizes: input, hidden..., 1.
    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(1);
        dims
    }
}

/// Network parameters plus the input standardization folded into the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub config: MlpConfig,
    /// Row-major `out_dim x in_dim` matrix per layer (hidden layers then the
    /// final scalar layer).
    pub weights: Vec<Vec<f64>>,
    /// One bias vector per hidden layer; the final layer has none.
    pub biases: Vec<Vec<f64>>,
    /// Per-input standardization mean.
    pub feat_mean: Vec<f64>,
    /// Per-input standardization scale, strictly positive.
    pub feat_std: Vec<f64>,
}

/// Glorot-uniform initialization; biases start at zero and standardization
/// at identity. Deterministic for a fixed config seed.
pub fn init(config: &MlpConfig) -> Result<MlpParams> {
    config.validate()?;
    let dims = config.layer_dims();
    let mut rng = Rng::derive(config.seed, 0x696e6974); // "init" stream
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len().saturating_sub(2));
    for l in 0..dims.len() - 1 {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let bound = num::sqrt(6.0 / (fan_in + fan_out) as f64);
        let mut w = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in * fan_out {
            w.push((2.0 * rng.uniform() - 1.0) * bound);
        }
        weights.push(w);
        if l + 2 < dims.len() {
            biases.push(vec![0.0; fan_out]);
        }
    }
    Ok(MlpParams {
        config: config.clone(),
        weights,
        biases,
        feat_mean: vec![0.0; config.input_dim],
        feat_std: vec![1.0; config.input_dim],
    })
}

impl MlpParams {
    /// Installs standardization statistics; scales at or below `1e-12` are
    /// replaced by 1 so constant features pass through unscaled.
    pub fn set_standardization(&mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<()> {
        if mean.len() != self.config.input_dim || std.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: mean.len().max(std.len()),
            });
        }
        self.feat_mean = mean;
        self.feat_std = std
            .into_iter()
            .map(|s| if s > 1e-12 { s } else { 1.0 })
            .collect();
        Ok(())
    }

    /// Raw-space coefficients of a linear (no hidden layer) model:
    /// `weight / feature_std`. `None` when the network has hidden layers.
    pub fn linear_coefficients(&self) -> Option<Vec<f64>> {
        if !self.config.hidden_dims.is_empty() {
            return None;
        }
        Some(
            self.weights[0]
                .iter()
                .zip(&self.feat_std)
                .map(|(w, s)| w / s)
                .collect(),
        )
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }
}

/// Activations remembered by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Standardized input (layer-0 activation).
    x_std: Vec<f64>,
    /// Post-ReLU, post-dropout activation per hidden layer.
    hidden: Vec<Vec<f64>>,
    /// ReLU pass-through mask per hidden layer.
    relu_on: Vec<Vec<bool>>,
    /// Dropout scale per hidden unit: 0 or `1/(1-p)`; all 1 in inference.
    drop_scale: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// ReLU gate pattern per hidden layer. Finite-difference checks compare
    /// patterns to detect perturbations that cross a kink.
    pub fn relu_pattern(&self) -> &[Vec<bool>] {
        &self.relu_on
    }
}

/// Runs the network. Passing a generator enables training mode with inverted
/// dropout (surviving units scaled by `1/(1-p)`); `None` disables dropout
/// with no rescaling.
pub fn forward(
    params: &MlpParams,
    x: &[f64],
    dropout_rng: Option<&mut Rng>,
) -> Result<(f64, ForwardCache)> {
    if x.len() != params.config.input_dim {
        return Err(Error::DimensionMismatch {
            expected: params.config.input_dim,
            got: x.len(),
        });
    }
    let x_std: Vec<f64> = x
        .iter()
        .zip(params.feat_mean.iter().zip(&params.feat_std))
        .map(|(v, (m, s))| (v - m) / s)
        .collect();

    let p = params.config.dropout_rate;
    let n_hidden = params.config.hidden_dims.len();
    let mut hidden = Vec::with_capacity(n_hidden);
    let mut relu_on = Vec::with_capacity(n_hidden);
    let mut drop_scale = Vec::with_capacity(n_hidden);

    let mut rng = dropout_rng;
    let mut activation: &[f64] = &x_std;
    for l in 0..n_hidden {
        let out_dim = params.config.hidden_dims[l];
        let in_dim = activation.len();
        let w = &params.weights[l];
        let b = &params.biases[l];
        let mut layer = Vec::with_capacity(out_dim);
        let mut mask = Vec::with_capacity(out_dim);
        let mut scale = Vec::with_capacity(out_dim);
        for o in 0..out_dim {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            let mut z = b[o];
            for (wi, ai) in row.iter().zip(activation) {
                z += wi * ai;
            }
            let on = z > 0.0;
            let mut a = if on { z } else { 0.0 };
            let s = match rng.as_deref_mut() {
                Some(r) if p > 0.0 => {
                    if r.uniform() < p {
                        0.0
                    } else {
                        1.0 / (1.0 - p)
                    }
                }
                _ => 1.0,
            };
            a *= s;
            layer.push(a);
            mask.push(on);
            scale.push(s);
        }
        hidden.push(layer);
        relu_on.push(mask);
        drop_scale.push(scale);
        activation = hidden.last().unwrap();
    }

    let final_w = params.weights.last().unwrap();
    let mut score = 0.0;
    for (wi, ai) in final_w.iter().zip(activation) {
        score += wi * ai;
    }
    Ok((
        score,
        ForwardCache {
            x_std,
            hidden,
            relu_on,
            drop_scale,
        },
    ))
}

/// Inference-mode score (dropout off).
pub fn infer(params: &MlpParams, x: &[f64]) -> Result<f64> {
    forward(params, x, None).map(|(score, _)| score)
}

/// Gradients of the score (times an upstream factor) with respect to all
/// trainable parameters and the raw input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl Gradients {
    /// Zero gradients shaped like `params`.
    pub fn zeros_like(params: &MlpParams) -> Self {
        Gradients {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            input: vec![0.0; params.config.input_dim],
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.input.iter_mut().zip(&other.input) {
            *x += y;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for x in w {
                *x *= factor;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= factor;
            }
        }
        for x in &mut self.input {
            *x *= factor;
        }
    }
}

/// Exact reverse-mode gradients under the dropout mask recorded in `cache`.
pub fn backward(params: &MlpParams, cache: &ForwardCache, upstream: f64) -> Gradients {
    let n_hidden = params.config.hidden_dims.len();
    let mut grads = Gradients::zeros_like(params);

    let top_activation: &[f64] = if n_hidden == 0 {
        &cache.x_std
    } else {
        &cache.hidden[n_hidden - 1]
    };

    // Final bias-free layer.
    let final_w = params.weights.last().unwrap();
    let gw_final = grads.weights.last_mut().unwrap();
    for (g, a) in gw_final.iter_mut().zip(top_activation) {
        *g = upstream * a;
    }
    let mut d_act: Vec<f64> = final_w.iter().map(|w| upstream * w).collect();

    for l in (0..n_hidden).rev() {
        let below: &[f64] = if l == 0 {
            &cache.x_std
        } else {
            &cache.hidden[l - 1]
        };
        let in_dim = below.len();
        let out_dim = params.config.hidden_dims[l];
        let w = &params.weights[l];
        let mut d_below = vec![0.0; in_dim];
        for o in 0..out_dim {
            // Through dropout scaling then the ReLU gate.
            let mut dz = d_act[o] * cache.drop_scale[l][o];
            if !cache.relu_on[l][o] {
                dz = 0.0;
            }
            grads.biases[l][o] = dz;
            let row = &w[o * in_dim..(o + 1) * in_dim];
            let grow = &mut grads.weights[l][o * in_dim..(o + 1) * in_dim];
            for i in 0..in_dim {
                grow[i] = dz * below[i];
                d_below[i] += dz * row[i];
            }
        }
        d_act = d_below;
    }

    // d_act now holds the gradient w.r.t. the standardized input.
    for (g, (d, s)) in grads
        .input
        .iter_mut()
        .zip(d_act.iter().zip(&params.feat_std))
    {
        *g = d / s;
    }
    grads
}

/// Adam optimizer state with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    /// Decoupled decay applied to weights only, never biases.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &MlpParams, learning_rate: f64, weight_decay: f64) -> Self {
        AdamState {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_w: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// One optimizer step: decoupled decay shrinks weights first, then the
/// bias-corrected Adam update is applied to weights and biases.
pub fn adam_step(params: &mut MlpParams, grads: &Gradients, state: &mut AdamState) {
    state.step += 1;
    let t = state.step as f64;
    let corr1 = 1.0 - num::powf(state.beta1, t);
    let corr2 = 1.0 - num::powf(state.beta2, t);
    let decay = 1.0 - state.learning_rate * state.weight_decay;

    for (l, w) in params.weights.iter_mut().enumerate() {
        let g = &grads.weights[l];
        let (m, v) = (&mut state.m_w[l], &mut state.v_w[l]);
        for i in 0..w.len() {
            w[i] *= decay;
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            w[i] -= state.learning_rate * m_hat / (num::sqrt(v_hat) + state.epsilon);
        }
    }
    for (l, b) in params.biases.iter_mut().enumerate() {
        let g = &grads.biases[l];
        let (m, v) = (&mut state.m_b[l], &mut state.v_b[l]);
        for i in 0..b.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            b[i] -= state.learning_rate * m_hat / (num::sqrt(v_hat) + state.epsilon);
        }
    }
}

/// Column means and population standard deviations of a feature matrix.
pub fn standardization_stats(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::EmptyInput("standardization rows"));
    }
    let dim = rows[0].len();
    let mut mean = vec![0.0; dim];
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; dim];
    for row in rows {
        for ((v, m), acc) in row.iter().zip(&mean).zip(&mut var) {
            let d = v - m;
            *acc += d * d;
        }
    }
    let std = var.into_iter().map(|v| num::sqrt(v / n as f64)).collect();
    Ok((mean, std))
}
