//! Linear models over hashed n-gram features, trained by seeded SGD.
//!
//! One output (`classes == 1`) is a logistic model; more outputs form a
//! softmax model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{hashed_ngram_features, SparseVec};

pub const DEFAULT_HASH_DIM: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hash_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 13,
            epochs: 8,
            learning_rate: 0.5,
            hash_dim: DEFAULT_HASH_DIM,
        }
    }
}

impl TrainConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.hash_dim == 0 || self.epochs == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config(
                "hash_dim, epochs and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub(crate) dim: usize,
    pub(crate) classes: usize,
    pub(crate) bias: Vec<f64>,
    /// Row-major, `classes × dim`.
    pub(crate) weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    pub train_accuracy: f64,
}

impl LinearModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        LinearModel {
            dim,
            classes,
            bias: vec![0.0; classes],
            weights: vec![0.0; classes * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self, text: &str) -> SparseVec {
        hashed_ngram_features(text, self.dim)
    }

    fn logits(&self, x: &SparseVec) -> Vec<f64> {
        (0..self.classes)
            .map(|c| self.bias[c] + x.dot(&self.weights[c * self.dim..(c + 1) * self.dim]))
            .collect()
    }

    /// Probability of the positive class (logistic models).
    pub fn probability(&self, text: &str) -> f64 {
        debug_assert_eq!(self.classes, 1);
        sigmoid(self.logits(&self.features(text))[0])
    }

    /// Class distribution (softmax models).
    pub fn distribution(&self, text: &str) -> Vec<f64> {
        softmax(&self.logits(&self.features(text)))
    }

    /// Logistic regression on `(text, label)` pairs.
    pub fn train_binary(samples: &[(String, bool)], cfg: &TrainConfig) -> Result<(Self, TrainReport)> {
        cfg.validate()?;
        let has_pos = samples.iter().any(|(_, y)| *y);
        let has_neg = samples.iter().any(|(_, y)| !*y);
        if !(has_pos && has_neg) {
            return Err(Error::DegenerateTraining(
                "need at least one positive and one negative sample".into(),
            ));
        }
        let xs: Vec<SparseVec> = samples
            .iter()
            .map(|(t, _)| hashed_ngram_features(t, cfg.hash_dim))
            .collect();
        let mut model = LinearModel::zeros(1, cfg.hash_dim);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut curve = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                let y = if samples[i].1 { 1.0 } else { 0.0 };
                let p = sigmoid(model.logits(&xs[i])[0]);
                total += log_loss(p, y);
                let g = p - y;
                model.bias[0] -= cfg.learning_rate * g;
                for &(j, v) in &xs[i].entries {
                    model.weights[j as usize] -= cfg.learning_rate * g * v;
                }
            }
            curve.push(total / samples.len() as f64);
        }
        let correct = xs
            .iter()
            .zip(samples)
            .filter(|(x, (_, y))| (sigmoid(model.logits(x)[0]) > 0.5) == *y)
            .count();
        let report = TrainReport {
            loss_curve: curve,
            train_accuracy: correct as f64 / samples.len() as f64,
        };
        Ok((model, report))
    }

    /// Multinomial logistic regression on `(text, class)` pairs.
    pub fn train_multiclass(
        samples: &[(String, usize)],
        classes: usize,
        cfg: &TrainConfig,
    ) -> Result<(Self, TrainReport)> {
        cfg.validate()?;
        let mut seen = vec![false; classes];
        for (_, c) in samples {
            if *c >= classes {
                return Err(Error::Config(format!("class index {c} out of range")));
            }
            seen[*c] = true;
        }
        if seen.iter().filter(|s| **s).count() < 2 {
            return Err(Error::DegenerateTraining(
                "need samples from at least two classes".into(),
            ));
        }
        let xs: Vec<SparseVec> = samples
            .iter()
            .map(|(t, _)| hashed_ngram_features(t, cfg.hash_dim))
            .collect();
        let mut model = LinearModel::zeros(classes, cfg.hash_dim);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut curve = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                let probs = softmax(&model.logits(&xs[i]));
                let y = samples[i].1;
                total += -probs[y].max(1e-300).ln();
                for (c, p) in probs.iter().enumerate() {
                    let g = p - if c == y { 1.0 } else { 0.0 };
                    model.bias[c] -= cfg.learning_rate * g;
                    let row = &mut model.weights[c * model.dim..(c + 1) * model.dim];
                    for &(j, v) in &xs[i].entries {
                        row[j as usize] -= cfg.learning_rate * g * v;
                    }
                }
            }
            curve.push(total / samples.len() as f64);
        }
        let correct = xs
            .iter()
            .zip(samples)
            .filter(|(x, (_, y))| argmax(&softmax(&model.logits(x))) == *y)
            .count();
        let report = TrainReport {
            loss_curve: curve,
            train_accuracy: correct as f64 / samples.len() as f64,
        };
        Ok((model, report))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn log_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}
