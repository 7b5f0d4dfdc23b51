use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_inputs, gradient_descent, open_unit, sigmoid, Dense, TrainConfig, TrainingHistory, MODEL_FORMAT_VERSION,
};
use crate::data::NUM_BINS;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    pub input_size: usize,
    pub hidden_size: usize,
    /// Target mean hidden activation ρ.
    pub sparsity_target: f64,
    /// Weight β of the KL sparsity penalty.
    pub sparsity_weight: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            input_size: NUM_BINS,
            hidden_size: 16,
            sparsity_target: 0.05,
            sparsity_weight: 0.1,
        }
    }
}

impl AutoencoderConfig {
    fn validate(&self) -> Result<()> {
        if self.input_size < 1 || self.hidden_size < 1 {
            return Err(Error::InvalidConfig("layer sizes must be at least 1".into()));
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return Err(Error::InvalidConfig("sparsity target must lie in (0, 1)".into()));
        }
        if !(self.sparsity_weight >= 0.0) {
            return Err(Error::InvalidConfig("sparsity weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub format_version: u32,
    pub config: AutoencoderConfig,
    pub encoder: Dense,
    pub decoder: Dense,
    pub train_config: TrainConfig,
}

/// Mean activation bounds used inside the KL term.
const RHO_FLOOR: f64 = 1e-12;

fn kl(rho: f64, rho_hat: f64) -> f64 {
    let r = rho_hat.clamp(RHO_FLOOR, 1.0 - RHO_FLOOR);
    rho * (rho / r).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - r)).ln()
}

fn kl_derivative(rho: f64, rho_hat: f64) -> f64 {
    let r = rho_hat.clamp(RHO_FLOOR, 1.0 - RHO_FLOOR);
    -rho / r + (1.0 - rho) / (1.0 - r)
}

impl AutoencoderModel {
    /// Freshly initialised, untrained model.
    pub fn new(config: AutoencoderConfig, train_config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
        let encoder = Dense::init(config.input_size, config.hidden_size, &mut rng);
        let decoder = Dense::init(config.hidden_size, config.input_size, &mut rng);
        Ok(AutoencoderModel {
            format_version: MODEL_FORMAT_VERSION,
            config,
            encoder,
            decoder,
            train_config,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    pub fn input_size(&self) -> usize {
        self.config.input_size
    }

    fn hidden(&self, x: &[f64], h: &mut [f64]) {
        self.encoder.affine(x, h);
        h.iter_mut().for_each(|z| *z = sigmoid(*z));
    }

    /// Sigmoid hidden activations for one input.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_size() {
            return Err(Error::Length {
                expected: self.input_size(),
                actual: x.len(),
            });
        }
        let mut h = vec![0.0; self.hidden_size()];
        self.hidden(x, &mut h);
        Ok(h.into_iter().map(open_unit).collect())
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h = self.encode(x)?;
        let mut y = vec![0.0; self.input_size()];
        self.decoder.affine(&h, &mut y);
        Ok(y)
    }

    /// Mean hidden activation over a data set.
    pub fn mean_activation(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let mut rho = vec![0.0; self.hidden_size()];
        let mut h = vec![0.0; self.hidden_size()];
        for x in data {
            self.hidden(x, &mut h);
            rho.iter_mut().zip(&h).for_each(|(r, a)| *r += a);
        }
        rho.iter_mut().for_each(|r| *r /= data.len() as f64);
        rho
    }

    /// Reconstruction plus sparsity loss, forward pass only.
    pub fn loss(&self, data: &[Vec<f64>]) -> f64 {
        let m = data.len() as f64;
        let mut h = vec![0.0; self.hidden_size()];
        let mut y = vec![0.0; self.input_size()];
        let mut rec = 0.0;
        for x in data {
            self.hidden(x, &mut h);
            self.decoder.affine(&h, &mut y);
            rec += 0.5 * y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        let rho = self.config.sparsity_target;
        let sparsity: f64 = self.mean_activation(data).iter().map(|&r| kl(rho, r)).sum();
        rec / m + self.config.sparsity_weight * sparsity
    }

    /// Loss and its gradient, flattened in [`Self::parameters`] order.
    pub fn loss_and_gradient(&self, data: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let m = data.len() as f64;
        let (d, k) = (self.input_size(), self.hidden_size());
        let hidden: Vec<Vec<f64>> = data
            .iter()
            .map(|x| {
                let mut h = vec![0.0; k];
                self.hidden(x, &mut h);
                h
            })
            .collect();
        let mut rho_hat = vec![0.0; k];
        for h in &hidden {
            rho_hat.iter_mut().zip(h).for_each(|(r, a)| *r += a);
        }
        rho_hat.iter_mut().for_each(|r| *r /= m);

        let rho = self.config.sparsity_target;
        let beta = self.config.sparsity_weight;
        let sparse_grad: Vec<f64> = rho_hat.iter().map(|&r| beta * kl_derivative(rho, r) / m).collect();

        let mut g_enc_w = vec![0.0; self.encoder.weights.len()];
        let mut g_enc_b = vec![0.0; k];
        let mut g_dec_w = vec![0.0; self.decoder.weights.len()];
        let mut g_dec_b = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut dy = vec![0.0; d];
        let mut dh = vec![0.0; k];
        let mut rec = 0.0;
        for (x, h) in data.iter().zip(&hidden) {
            self.decoder.affine(h, &mut y);
            for i in 0..d {
                let e = y[i] - x[i];
                rec += 0.5 * e * e;
                dy[i] = e / m;
            }
            self.decoder.accumulate(h, &dy, &mut g_dec_w, &mut g_dec_b);
            self.decoder.backward_input(&dy, &mut dh);
            for j in 0..k {
                dh[j] = (dh[j] + sparse_grad[j]) * h[j] * (1.0 - h[j]);
            }
            self.encoder.accumulate(x, &dh, &mut g_enc_w, &mut g_enc_b);
        }
        let sparsity: f64 = rho_hat.iter().map(|&r| kl(rho, r)).sum();
        let loss = rec / m + beta * sparsity;
        let mut grad = g_enc_w;
        grad.extend(g_enc_b);
        grad.extend(g_dec_w);
        grad.extend(g_dec_b);
        (loss, grad)
    }

    /// Encoder weights, encoder biases, decoder weights, decoder biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.encoder.params().chain(self.decoder.params()).copied().collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let n = self.encoder.param_count() + self.decoder.param_count();
        if params.len() != n {
            return Err(Error::Length {
                expected: n,
                actual: params.len(),
            });
        }
        for (p, v) in self.encoder.params_mut().chain(self.decoder.params_mut()).zip(params) {
            *p = *v;
        }
        Ok(())
    }

    fn descend(&mut self, grad: &[f64], lr: f64) {
        for (p, g) in self.encoder.params_mut().chain(self.decoder.params_mut()).zip(grad) {
            *p -= lr * g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.decoder.is_finite()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: AutoencoderModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        let c = &m.config;
        let shapes_ok = m.encoder.inputs == c.input_size
            && m.encoder.outputs == c.hidden_size
            && m.decoder.inputs == c.hidden_size
            && m.decoder.outputs == c.input_size
            && m.encoder.weights.len() == c.input_size * c.hidden_size
            && m.decoder.weights.len() == c.input_size * c.hidden_size
            && m.encoder.biases.len() == c.hidden_size
            && m.decoder.biases.len() == c.input_size;
        if !shapes_ok || !m.is_finite() {
            return Err(Error::InvalidConfig("malformed autoencoder parameters".into()));
        }
        Ok(m)
    }
}

/// Train on vectors drawn from a single class.
pub fn train_autoencoder(
    data: &[Vec<f64>],
    config: &AutoencoderConfig,
    train: &TrainConfig,
) -> Result<(AutoencoderModel, TrainingHistory)> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "autoencoder needs at least 2 training vectors, got {}",
            data.len()
        )));
    }
    check_inputs(data, config.input_size)?;
    let mut model = AutoencoderModel::new(config.clone(), train.clone())?;
    let history = gradient_descent(
        &mut model,
        train,
        |m| m.loss_and_gradient(data),
        |m| m.loss(data),
        |m, g, lr| m.descend(g, lr),
    )?;
    Ok((model, history))
}

pub fn encode(model: &AutoencoderModel, x: &[f64]) -> Result<Vec<f64>> {
    model.encode(x)
}
