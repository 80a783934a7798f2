//! Feedforward Q-network: batch-norm on the raw state, ReLU hidden layers
//! with inverted dropout between them, and a linear output head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use super::NnError;

/// Layer widths used throughout the simulator: 3 state features in, two
/// hidden layers of four and two of eight, and one Q-value per action out.
pub const DEFAULT_LAYER_DIMS: [usize; 6] = [3, 4, 8, 8, 4, 2];
pub const DEFAULT_DROPOUT: f64 = 0.10;
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, dropout active, running statistics updated.
    Train,
    /// Running statistics, no dropout. Deterministic.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Stored `(out, in)`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layer_dims: Vec<usize>,
    pub bn: BatchNorm,
    pub layers: Vec<Dense>,
    dropout_rate: f64,
}

/// Everything backward needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    x_hat: Matrix,
    /// Input to each dense layer (index 0 is the batch-norm output).
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    pre_activations: Vec<Matrix>,
    /// Inverted-dropout multipliers after hidden layers `0..hidden-1`.
    masks: Vec<Matrix>,
}

/// Gradients laid out in [`QNetwork::param_groups_mut`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub groups: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn bn_gamma(&self) -> &[f64] {
        &self.groups[0]
    }

    pub fn bn_beta(&self) -> &[f64] {
        &self.groups[1]
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.groups[2 + 2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.groups[3 + 2 * layer]
    }

    pub fn is_zero(&self) -> bool {
        self.groups.iter().flatten().all(|g| *g == 0.0)
    }
}

impl QNetwork {
    /// Seeded He-uniform initialization; biases zero, batch-norm identity.
    pub fn new(layer_dims: &[usize], dropout_rate: f64, seed: u64) -> Result<Self, NnError> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(NnError::InvalidArchitecture(layer_dims.to_vec()));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(NnError::InvalidDropout(dropout_rate));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect();
                Dense {
                    weights: Matrix::from_vec(fan_out, fan_in, data),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            bn: BatchNorm::new(layer_dims[0]),
            layers,
            dropout_rate,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn input_width(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn trainable_count(&self) -> usize {
        2 * self.input_width()
            + self
                .layers
                .iter()
                .map(|l| l.weights.as_slice().len() + l.bias.len())
                .sum::<usize>()
    }

    pub fn running_stat_count(&self) -> usize {
        2 * self.input_width()
    }

    /// Trainable parameters in fixed order: γ, β, then `W₀, b₀, W₁, b₁, …`.
    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut groups: Vec<&mut [f64]> = vec![&mut self.bn.gamma, &mut self.bn.beta];
        for layer in &mut self.layers {
            groups.push(layer.weights.as_mut_slice());
            groups.push(&mut layer.bias);
        }
        groups
    }

    pub fn param_groups(&self) -> Vec<&[f64]> {
        let mut groups: Vec<&[f64]> = vec![&self.bn.gamma, &self.bn.beta];
        for layer in &self.layers {
            groups.push(layer.weights.as_slice());
            groups.push(&layer.bias);
        }
        groups
    }

    /// FNV-1a over the bit patterns of every parameter and running statistic.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for g in self.param_groups() {
            g.iter().copied().for_each(&mut mix);
        }
        self.bn.running_mean.iter().copied().for_each(&mut mix);
        self.bn.running_var.iter().copied().for_each(&mut mix);
        h
    }

    /// Makes every parameter and statistic of `self` equal to `other`'s.
    pub fn copy_from(&mut self, other: &QNetwork) {
        self.clone_from(other);
    }

    fn check_input(&self, batch: &Matrix) -> Result<(), NnError> {
        if batch.cols() != self.input_width() {
            return Err(NnError::InputWidth {
                expected: self.input_width(),
                got: batch.cols(),
            });
        }
        if batch.rows() == 0 {
            return Err(NnError::EmptyBatch);
        }
        Ok(())
    }

    fn dense(layer: &Dense, input: &Matrix) -> Matrix {
        let mut z = input.matmul_transposed(&layer.weights);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        z
    }

    /// Inference-mode forward pass. Pure: no dropout, running statistics only.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix, NnError> {
        self.check_input(batch)?;
        let mut a = batch.clone();
        for r in 0..a.rows() {
            for (j, v) in a.row_mut(r).iter_mut().enumerate() {
                let inv_std = 1.0 / (self.bn.running_var[j] + BN_EPS).sqrt();
                *v = self.bn.gamma[j] * (*v - self.bn.running_mean[j]) * inv_std + self.bn.beta[j];
            }
        }
        let hidden = self.hidden_count();
        for (l, layer) in self.layers.iter().enumerate() {
            a = Self::dense(layer, &a);
            if l < hidden {
                a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(a)
    }

    /// Q-values for a single state.
    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>, NnError> {
        let q = self.predict(&Matrix::from_vec(1, state.len(), state.to_vec()))?;
        Ok(q.row(0).to_vec())
    }

    /// Training-mode forward pass. Uses batch statistics, draws dropout masks
    /// from `rng` and folds the batch statistics into the running averages.
    pub fn forward_train<R: Rng + ?Sized>(
        &mut self,
        batch: &Matrix,
        rng: &mut R,
    ) -> Result<(Matrix, ForwardCache), NnError> {
        self.check_input(batch)?;
        let n = batch.rows();
        if n < 2 {
            return Err(NnError::BatchTooSmall(n));
        }
        let fingerprint = self.trainable_fingerprint();
        let features = self.input_width();
        let mean: Vec<f64> = batch.column_sums().iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0; features];
        for r in 0..n {
            for (j, x) in batch.row(r).iter().enumerate() {
                var[j] += (x - mean[j]).powi(2);
            }
        }
        let unbiased: Vec<f64> = var.iter().map(|v| v / (n - 1) as f64).collect();
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

        let mut x_hat = batch.clone();
        let mut a = Matrix::zeros(n, features);
        for r in 0..n {
            for j in 0..features {
                let xh = (batch[(r, j)] - mean[j]) * inv_std[j];
                x_hat[(r, j)] = xh;
                a[(r, j)] = self.bn.gamma[j] * xh + self.bn.beta[j];
            }
        }
        for j in 0..features {
            self.bn.running_mean[j] = BN_MOMENTUM * self.bn.running_mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
            self.bn.running_var[j] = BN_MOMENTUM * self.bn.running_var[j] + (1.0 - BN_MOMENTUM) * unbiased[j];
        }

        let hidden = self.hidden_count();
        let keep_scale = 1.0 / (1.0 - self.dropout_rate);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(hidden);
        let mut masks = Vec::with_capacity(hidden.saturating_sub(1));
        for (l, layer) in self.layers.iter().enumerate() {
            let z = Self::dense(layer, &a);
            inputs.push(a);
            if l < hidden {
                let mut h = z.clone();
                h.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
                pre_activations.push(z);
                if l + 1 < hidden {
                    let mut mask = Matrix::zeros(h.rows(), h.cols());
                    for (m, v) in mask.as_mut_slice().iter_mut().zip(h.as_mut_slice()) {
                        *m = if rng.gen::<f64>() < self.dropout_rate { 0.0 } else { keep_scale };
                        *v *= *m;
                    }
                    masks.push(mask);
                }
                a = h;
            } else {
                a = z;
            }
        }
        let cache = ForwardCache {
            fingerprint,
            x_hat,
            inputs,
            pre_activations,
            masks,
        };
        Ok((a, cache))
    }

    /// Mode-dispatching forward. Infer mode ignores `rng`.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        batch: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix, Option<ForwardCache>), NnError> {
        match mode {
            Mode::Infer => Ok((self.predict(batch)?, None)),
            Mode::Train => {
                let (q, cache) = self.forward_train(batch, rng)?;
                Ok((q, Some(cache)))
            }
        }
    }

    /// Gradients of a scalar loss with respect to all trainable parameters,
    /// given `dloss_dq` for the training forward recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, dloss_dq: &Matrix) -> Result<Gradients, NnError> {
        if cache.fingerprint != self.trainable_fingerprint() {
            return Err(NnError::CacheMismatch);
        }
        let n = cache.x_hat.rows();
        if dloss_dq.rows() != n || dloss_dq.cols() != self.output_width() {
            return Err(NnError::GradientShape {
                expected: (n, self.output_width()),
                got: (dloss_dq.rows(), dloss_dq.cols()),
            });
        }
        let mut groups: Vec<Vec<f64>> = vec![Vec::new(); 2 + 2 * self.layers.len()];
        let mut g = dloss_dq.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            groups[2 + 2 * l] = g.transposed_matmul(&cache.inputs[l]).as_slice().to_vec();
            groups[3 + 2 * l] = g.column_sums();
            let mut g_in = g.matmul(&layer.weights);
            if l > 0 {
                if let Some(mask) = cache.masks.get(l - 1) {
                    for (v, m) in g_in.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                        *v *= m;
                    }
                }
                for (v, z) in g_in.as_mut_slice().iter_mut().zip(cache.pre_activations[l - 1].as_slice()) {
                    if *z <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            g = g_in;
        }
        // g is now dL/d(batch-norm output).
        let features = self.input_width();
        let mut dgamma = vec![0.0; features];
        let mut dbeta = vec![0.0; features];
        for r in 0..n {
            for j in 0..features {
                dgamma[j] += g[(r, j)] * cache.x_hat[(r, j)];
                dbeta[j] += g[(r, j)];
            }
        }
        groups[0] = dgamma;
        groups[1] = dbeta;
        Ok(Gradients { groups })
    }

    // Running statistics never enter the training computation, so a cache
    // stays valid across their update.
    fn trainable_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for g in self.param_groups() {
            for x in g {
                for b in x.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}
