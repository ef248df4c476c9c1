//! Multinomial logistic regression over hashed n-gram features.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::hashing::{FeatureHasher, SparseVec};

/// Weights of a softmax classifier over `dims` hashed features.
///
/// Layout: `weights[class * dims + feature]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "dump::LinearDump", try_from = "dump::LinearDump")]
pub struct LinearModel {
    k: usize,
    dims: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Dense gradient, same layout as [`LinearModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(k: usize, dims: usize) -> Self {
        Self { k, dims, weights: vec![0.0; k * dims], bias: vec![0.0; k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn logits(&self, x: &SparseVec) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (c, zc) in z.iter_mut().enumerate() {
            let row = &self.weights[c * self.dims..(c + 1) * self.dims];
            for &(j, v) in &x.entries {
                *zc += row[j as usize] * v;
            }
        }
        z
    }

    pub fn probs(&self, x: &SparseVec) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Cross-entropy against `target` plus `l2 / 2 * |W|^2`, and its
    /// gradient with respect to weights and bias.
    pub fn loss_and_gradient(&self, x: &SparseVec, target: &[f64], l2: f64) -> (f64, Gradient) {
        let p = self.probs(x);
        let mut loss = cross_entropy(target, &p);
        let mut grad = Gradient { weights: vec![0.0; self.weights.len()], bias: vec![0.0; self.k] };
        for c in 0..self.k {
            let dz = p[c] - target[c];
            grad.bias[c] = dz;
            for &(j, v) in &x.entries {
                grad.weights[c * self.dims + j as usize] += dz * v;
            }
        }
        if l2 > 0.0 {
            loss += 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
            for (g, w) in grad.weights.iter_mut().zip(&self.weights) {
                *g += l2 * w;
            }
        }
        (loss, grad)
    }

    /// Mean cross-entropy (without the penalty) over a batch.
    pub fn mean_loss(&self, data: &[(SparseVec, Vec<f64>)]) -> f64 {
        let total: f64 = data.iter().map(|(x, t)| cross_entropy(t, &self.probs(x))).sum();
        total / data.len() as f64
    }
}

/// Numerically stable softmax; non-finite logits give the uniform vector.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    if z.iter().any(|v| !v.is_finite()) {
        return vec![1.0 / z.len() as f64; z.len()];
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| libm::exp(v - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn cross_entropy(target: &[f64], p: &[f64]) -> f64 {
    target
        .iter()
        .zip(p)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, q)| -t * libm::log(q.max(f64::MIN_POSITIVE)))
        .sum()
}

/// Optimizer settings for [`train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub shuffle: bool,
}

/// Mini-batch gradient descent on mean cross-entropy. Returns the mean
/// training loss after each epoch.
pub fn train<R: rand::Rng>(
    model: &mut LinearModel,
    data: &[(SparseVec, Vec<f64>)],
    settings: &SgdSettings,
    rng: &mut R,
) -> Vec<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(settings.epochs);
    let k = model.k;
    let dims = model.dims;
    let mut residuals = vec![0.0; k];
    for _ in 0..settings.epochs {
        if settings.shuffle {
            order.shuffle(rng);
        }
        for batch in order.chunks(settings.batch_size.max(1)) {
            let scale = settings.learning_rate / batch.len() as f64;
            // Residuals for the whole batch are taken at the pre-update weights.
            let mut updates: Vec<(usize, Vec<f64>)> = Vec::with_capacity(batch.len());
            for &i in batch {
                let (x, t) = &data[i];
                let p = model.probs(x);
                for c in 0..k {
                    residuals[c] = p[c] - t[c];
                }
                updates.push((i, residuals.clone()));
            }
            if settings.l2 > 0.0 {
                let decay = 1.0 - settings.learning_rate * settings.l2;
                model.weights.iter_mut().for_each(|w| *w *= decay);
            }
            for (i, r) in updates {
                let x = &data[i].0;
                for c in 0..k {
                    model.bias[c] -= scale * r[c];
                    let row = &mut model.weights[c * dims..(c + 1) * dims];
                    for &(j, v) in &x.entries {
                        row[j as usize] -= scale * r[c] * v;
                    }
                }
            }
        }
        history.push(model.mean_loss(data));
    }
    history
}

/// Hashed features plus the trained weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashedLinear {
    pub hasher: FeatureHasher,
    pub model: LinearModel,
}

impl HashedLinear {
    pub fn probs(&self, text: &str) -> Vec<f64> {
        self.model.probs(&self.hasher.features(text))
    }
}

mod dump {
    //! Sparse on-disk layout: only feature columns with a non-zero weight.

    use super::LinearModel;
    use alloc::string::String;
    use alloc::vec::Vec;
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    pub struct LinearDump {
        k: usize,
        dims: usize,
        bias: Vec<f64>,
        /// (feature index, weight per class)
        columns: Vec<(u32, Vec<f64>)>,
    }

    impl From<LinearModel> for LinearDump {
        fn from(m: LinearModel) -> Self {
            let mut columns = Vec::new();
            for j in 0..m.dims {
                let col: Vec<f64> = (0..m.k).map(|c| m.weights[c * m.dims + j]).collect();
                if col.iter().any(|w| *w != 0.0) {
                    columns.push((j as u32, col));
                }
            }
            LinearDump { k: m.k, dims: m.dims, bias: m.bias, columns }
        }
    }

    impl TryFrom<LinearDump> for LinearModel {
        type Error = String;

        fn try_from(d: LinearDump) -> Result<Self, String> {
            if d.bias.len() != d.k {
                return Err("bias length differs from class count".into());
            }
            let mut m = LinearModel::zeros(d.k, d.dims);
            m.bias = d.bias;
            for (j, col) in d.columns {
                let j = j as usize;
                if j >= d.dims || col.len() != d.k {
                    return Err("weight column out of shape".into());
                }
                for (c, w) in col.into_iter().enumerate() {
                    m.weights[c * d.dims + j] = w;
                }
            }
            Ok(m)
        }
    }
}
