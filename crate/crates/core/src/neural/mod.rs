//! Sparse autoencoder feature extraction and a feed-forward occupancy
//! classifier, both trained with full-batch gradient descent.
//!
//! Backpropagation is written out by hand for the two fixed architectures:
//!
//! * autoencoder `8 → 16 (sigmoid) → 8 (linear)`, loss
//!   `(1/2m) Σ‖x̂ − x‖² + β Σⱼ KL(ρ ‖ ρ̂ⱼ)`;
//! * classifier head `16 → 8 (sigmoid) → 1 (sigmoid)` over frozen encoder
//!   activations, loss mean binary cross-entropy.

mod autoencoder;
mod classifier;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use autoencoder::{encode, train_autoencoder, AutoencoderConfig, AutoencoderModel};
pub use classifier::{
    classify, compare_single_vs_both_class_pretraining, train_classifier, ClassifierConfig, ClassifierModel,
    PipelineConfig, PretrainingComparison,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop early once an epoch improves the loss by less than this. Zero
    /// disables early stopping.
    pub loss_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30_000,
            learning_rate: 0.1,
            seed: 0,
            loss_tolerance: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.loss_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("loss tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Loss trajectory summary of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs_run: usize,
}

/// Fully connected layer, weights stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    /// Weights uniform in ±1/√inputs, zero biases.
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Dense {
            inputs,
            outputs,
            weights,
            biases: vec![0.0; outputs],
        }
    }

    /// Pre-activations `W x + b`.
    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.biases))
        {
            *o = b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// Accumulate `grad_out xᵀ` and `grad_out` into the gradient buffers.
    fn accumulate(&self, x: &[f64], grad_out: &[f64], gw: &mut [f64], gb: &mut [f64]) {
        for (o, &g) in grad_out.iter().enumerate() {
            gb[o] += g;
            for (gwi, xi) in gw[o * self.inputs..(o + 1) * self.inputs].iter_mut().zip(x) {
                *gwi += g * xi;
            }
        }
    }

    /// `Wᵀ grad_out`.
    fn backward_input(&self, grad_out: &[f64], grad_in: &mut [f64]) {
        grad_in.iter_mut().for_each(|g| *g = 0.0);
        for (row, &g) in self.weights.chunks_exact(self.inputs).zip(grad_out) {
            for (gi, w) in grad_in.iter_mut().zip(row) {
                *gi += g * w;
            }
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Keep a probability strictly inside (0, 1).
pub(crate) fn open_unit(p: f64) -> f64 {
    const HI: f64 = 1.0 - f64::EPSILON / 2.0;
    p.clamp(f64::MIN_POSITIVE, HI)
}

fn check_inputs(data: &[Vec<f64>], width: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InsufficientData("no training vectors".into()));
    }
    if let Some(x) = data.iter().find(|x| x.len() != width) {
        return Err(Error::Length {
            expected: width,
            actual: x.len(),
        });
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("training data contains non-finite values".into()));
    }
    Ok(())
}

/// Plain gradient descent; `step(model, grad, lr)` applies `p -= lr · g`.
fn gradient_descent<M>(
    model: &mut M,
    config: &TrainConfig,
    loss_and_grad: impl Fn(&M) -> (f64, Vec<f64>),
    loss: impl Fn(&M) -> f64,
    step: impl Fn(&mut M, &[f64], f64),
) -> Result<TrainingHistory> {
    config.validate()?;
    let mut initial = f64::NAN;
    let mut previous = f64::INFINITY;
    let mut epochs_run = 0;
    for epoch in 0..config.epochs {
        let (l, grad) = loss_and_grad(model);
        if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        if epoch == 0 {
            initial = l;
        }
        if config.loss_tolerance > 0.0 && previous - l < config.loss_tolerance && epoch > 0 {
            break;
        }
        previous = l;
        step(model, &grad, config.learning_rate);
        epochs_run = epoch + 1;
    }
    let final_loss = loss(model);
    if !final_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: epochs_run });
    }
    Ok(TrainingHistory {
        initial_loss: initial,
        final_loss,
        epochs_run,
    })
}
