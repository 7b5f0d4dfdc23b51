use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_inputs, gradient_descent, open_unit, sigmoid, train_autoencoder, AutoencoderConfig, AutoencoderModel, Dense,
    TrainConfig, TrainingHistory, MODEL_FORMAT_VERSION,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden_size: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { hidden_size: 8 }
    }
}

/// Feed-forward head over frozen autoencoder features, ending in one sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub encoder: AutoencoderModel,
    pub hidden: Dense,
    pub output: Dense,
    pub train_config: TrainConfig,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl ClassifierModel {
    pub fn new(encoder: AutoencoderModel, config: &ClassifierConfig, train_config: TrainConfig) -> Result<Self> {
        if config.hidden_size < 1 {
            return Err(Error::InvalidConfig("classifier hidden size must be at least 1".into()));
        }
        // Offset the stream so head initialisation differs from the encoder's.
        let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
        rng.set_stream(1);
        let hidden = Dense::init(encoder.hidden_size(), config.hidden_size, &mut rng);
        let output = Dense::init(config.hidden_size, 1, &mut rng);
        Ok(ClassifierModel {
            format_version: MODEL_FORMAT_VERSION,
            encoder,
            hidden,
            output,
            train_config,
        })
    }

    fn logit(&self, features: &[f64], h: &mut [f64]) -> f64 {
        self.hidden.affine(features, h);
        h.iter_mut().for_each(|z| *z = sigmoid(*z));
        let mut z = [0.0];
        self.output.affine(h, &mut z);
        z[0]
    }

    /// Occupancy probability in (0, 1) for one frequency histogram.
    pub fn classify(&self, x: &[f64]) -> Result<f64> {
        let features = self.encoder.encode(x)?;
        Ok(self.classify_features(&features))
    }

    /// Probability from already-encoded features.
    pub fn classify_features(&self, features: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden.outputs];
        open_unit(sigmoid(self.logit(features, &mut h)))
    }

    /// Mean binary cross-entropy of the head on encoded features.
    pub fn head_loss(&self, features: &[Vec<f64>], labels: &[bool]) -> f64 {
        let mut h = vec![0.0; self.hidden.outputs];
        let total: f64 = features
            .iter()
            .zip(labels)
            .map(|(f, &y)| {
                let z = self.logit(f, &mut h);
                softplus(z) - if y { z } else { 0.0 }
            })
            .sum();
        total / features.len() as f64
    }

    /// Head loss and gradient flattened in [`Self::head_parameters`] order.
    pub fn head_loss_and_gradient(&self, features: &[Vec<f64>], labels: &[bool]) -> (f64, Vec<f64>) {
        let m = features.len() as f64;
        let k = self.hidden.outputs;
        let mut g_hw = vec![0.0; self.hidden.weights.len()];
        let mut g_hb = vec![0.0; k];
        let mut g_ow = vec![0.0; self.output.weights.len()];
        let mut g_ob = vec![0.0; 1];
        let mut h = vec![0.0; k];
        let mut dh = vec![0.0; k];
        let mut loss = 0.0;
        for (f, &y) in features.iter().zip(labels) {
            let z = self.logit(f, &mut h);
            let target = if y { 1.0 } else { 0.0 };
            loss += softplus(z) - target * z;
            let dz = [(sigmoid(z) - target) / m];
            self.output.accumulate(&h, &dz, &mut g_ow, &mut g_ob);
            self.output.backward_input(&dz, &mut dh);
            for j in 0..k {
                dh[j] *= h[j] * (1.0 - h[j]);
            }
            self.hidden.accumulate(f, &dh, &mut g_hw, &mut g_hb);
        }
        let mut grad = g_hw;
        grad.extend(g_hb);
        grad.extend(g_ow);
        grad.extend(g_ob);
        (loss / m, grad)
    }

    /// Hidden weights, hidden biases, output weights, output bias.
    pub fn head_parameters(&self) -> Vec<f64> {
        self.hidden.params().chain(self.output.params()).copied().collect()
    }

    pub fn set_head_parameters(&mut self, params: &[f64]) -> Result<()> {
        let n = self.hidden.param_count() + self.output.param_count();
        if params.len() != n {
            return Err(Error::Length {
                expected: n,
                actual: params.len(),
            });
        }
        for (p, v) in self.hidden.params_mut().chain(self.output.params_mut()).zip(params) {
            *p = *v;
        }
        Ok(())
    }

    fn descend(&mut self, grad: &[f64], lr: f64) {
        for (p, g) in self.hidden.params_mut().chain(self.output.params_mut()).zip(grad) {
            *p -= lr * g;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ClassifierModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        // Re-validates the embedded encoder.
        AutoencoderModel::from_json(&m.encoder.to_json()?)?;
        let shapes_ok = m.hidden.inputs == m.encoder.hidden_size()
            && m.hidden.weights.len() == m.hidden.inputs * m.hidden.outputs
            && m.hidden.biases.len() == m.hidden.outputs
            && m.output.inputs == m.hidden.outputs
            && m.output.outputs == 1
            && m.output.weights.len() == m.output.inputs
            && m.output.biases.len() == 1;
        if !shapes_ok || !m.hidden.is_finite() || !m.output.is_finite() {
            return Err(Error::InvalidConfig("malformed classifier parameters".into()));
        }
        Ok(m)
    }
}

/// Train the head on `inputs` (frequency histograms) with the encoder frozen.
pub fn train_classifier(
    encoder: &AutoencoderModel,
    inputs: &[Vec<f64>],
    labels: &[bool],
    config: &ClassifierConfig,
    train: &TrainConfig,
) -> Result<(ClassifierModel, TrainingHistory)> {
    if inputs.len() != labels.len() {
        return Err(Error::Length {
            expected: inputs.len(),
            actual: labels.len(),
        });
    }
    if inputs.len() < 2 {
        return Err(Error::InsufficientData("classifier needs at least 2 samples".into()));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    check_inputs(inputs, encoder.input_size())?;
    let features: Vec<Vec<f64>> = inputs.iter().map(|x| encoder.encode(x)).collect::<Result<_>>()?;
    let mut model = ClassifierModel::new(encoder.clone(), config, train.clone())?;
    let history = gradient_descent(
        &mut model,
        train,
        |m| m.head_loss_and_gradient(&features, labels),
        |m| m.head_loss(&features, labels),
        |m, g, lr| m.descend(g, lr),
    )?;
    Ok((model, history))
}

pub fn classify(model: &ClassifierModel, x: &[f64]) -> Result<f64> {
    model.classify(x)
}

/// Sizes and training settings for the autoencoder + classifier pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub autoencoder: AutoencoderConfig,
    pub classifier: ClassifierConfig,
    pub train: TrainConfig,
}

impl PipelineConfig {
    /// Autoencoder on `ae_inputs`, then the classifier head on all samples.
    pub fn fit(
        &self,
        ae_inputs: &[Vec<f64>],
        inputs: &[Vec<f64>],
        labels: &[bool],
    ) -> Result<(ClassifierModel, TrainingHistory, TrainingHistory)> {
        let (encoder, ae_hist) = train_autoencoder(ae_inputs, &self.autoencoder, &self.train)?;
        let (clf, clf_hist) = train_classifier(&encoder, inputs, labels, &self.classifier, &self.train)?;
        Ok((clf, ae_hist, clf_hist))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainingComparison {
    pub train_size: usize,
    pub test_size: usize,
    /// Held-out accuracy with the autoencoder trained on occupied slots only.
    pub single_class_accuracy: f64,
    /// Held-out accuracy with the autoencoder trained on both classes.
    pub both_class_accuracy: f64,
    /// `single_class_accuracy - both_class_accuracy`.
    pub delta: f64,
}

fn accuracy(model: &ClassifierModel, inputs: &[Vec<f64>], labels: &[bool]) -> Result<f64> {
    let mut correct = 0usize;
    for (x, &y) in inputs.iter().zip(labels) {
        if (model.classify(x)? > 0.5) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / inputs.len() as f64)
}

/// Train two pipelines on a seeded split that differ only in which slots
/// pretrain the autoencoder, and compare held-out accuracy.
pub fn compare_single_vs_both_class_pretraining(
    inputs: &[Vec<f64>],
    labels: &[bool],
    config: &PipelineConfig,
    holdout_fraction: f64,
) -> Result<PretrainingComparison> {
    if inputs.len() != labels.len() {
        return Err(Error::Length {
            expected: inputs.len(),
            actual: labels.len(),
        });
    }
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::InvalidConfig("holdout fraction must lie in (0, 1)".into()));
    }
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.train.seed));
    let n_test = ((inputs.len() as f64) * holdout_fraction).round() as usize;
    let (test_idx, train_idx) = order.split_at(n_test);
    if test_idx.is_empty() || train_idx.len() < 2 {
        return Err(Error::InsufficientData("split leaves an empty partition".into()));
    }
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<bool>) {
        (
            idx.iter().map(|&i| inputs[i].clone()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (train_x, train_y) = pick(train_idx);
    let (test_x, test_y) = pick(test_idx);
    let occupied: Vec<Vec<f64>> = train_x
        .iter()
        .zip(&train_y)
        .filter(|(_, &y)| y)
        .map(|(x, _)| x.clone())
        .collect();

    let (single, _, _) = config.fit(&occupied, &train_x, &train_y)?;
    let (both, _, _) = config.fit(&train_x, &train_x, &train_y)?;
    let single_class_accuracy = accuracy(&single, &test_x, &test_y)?;
    let both_class_accuracy = accuracy(&both, &test_x, &test_y)?;
    Ok(PretrainingComparison {
        train_size: train_x.len(),
        test_size: test_x.len(),
        single_class_accuracy,
        both_class_accuracy,
        delta: single_class_accuracy - both_class_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn quick(epochs: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: lr,
            seed: 17,
            loss_tolerance: 0.0,
        }
    }

    /// Frequency-like vectors: class 1 shifts mass out of the first bin.
    fn separable(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let occ = i % 2 == 0;
            let first = if occ {
                0.4 + 0.1 * rng.random::<f64>()
            } else {
                0.9 + 0.1 * rng.random::<f64>()
            };
            let mut v = vec![first];
            let rest = 1.0 - first;
            let w: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            v.extend(w.iter().map(|x| rest * x / s));
            xs.push(v);
            ys.push(occ);
        }
        (xs, ys)
    }

    fn encoder() -> AutoencoderModel {
        AutoencoderModel::new(AutoencoderConfig::default(), quick(1, 0.1)).unwrap()
    }

    #[test]
    fn head_gradient_matches_central_differences() {
        let (xs, ys) = separable(6, 1);
        let enc = encoder();
        let model = ClassifierModel::new(enc.clone(), &ClassifierConfig::default(), quick(1, 0.1)).unwrap();
        let feats: Vec<Vec<f64>> = xs.iter().map(|x| enc.encode(x).unwrap()).collect();
        let (_, grad) = model.head_loss_and_gradient(&feats, &ys);
        let base = model.head_parameters();
        let mut probe = model.clone();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += eps;
            probe.set_head_parameters(&p).unwrap();
            let up = probe.head_loss(&feats, &ys);
            p[i] -= 2.0 * eps;
            probe.set_head_parameters(&p).unwrap();
            let down = probe.head_loss(&feats, &ys);
            let numeric = (up - down) / (2.0 * eps);
            let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-5, "max relative error {worst}");
    }

    #[test]
    fn separable_data_trains_and_encoder_stays_frozen() {
        let (xs, ys) = separable(200, 2);
        let (enc, _) = train_autoencoder(
            &xs.iter()
                .zip(&ys)
                .filter(|(_, &y)| y)
                .map(|(x, _)| x.clone())
                .collect::<Vec<_>>(),
            &AutoencoderConfig::default(),
            &quick(200, 0.5),
        )
        .unwrap();
        let before = enc.to_json().unwrap();
        let (clf, hist) = train_classifier(&enc, &xs, &ys, &ClassifierConfig::default(), &quick(2000, 2.0)).unwrap();
        assert_eq!(enc.to_json().unwrap(), before);
        assert_eq!(clf.encoder, enc);
        assert!(hist.final_loss < hist.initial_loss);
        let acc = accuracy(&clf, &xs, &ys).unwrap();
        assert!(acc >= 0.95, "training accuracy {acc}");
    }

    #[test]
    fn outputs_in_open_interval_and_deterministic() {
        let (xs, ys) = separable(20, 3);
        let (clf, _) = train_classifier(&encoder(), &xs, &ys, &ClassifierConfig::default(), &quick(50, 0.5)).unwrap();
        for x in &xs {
            let p = classify(&clf, x).unwrap();
            assert!(p > 0.0 && p < 1.0);
            assert_eq!(p, classify(&clf, x).unwrap());
        }
        let mut extreme = clf.clone();
        extreme.output.biases[0] = 1e4;
        assert!(extreme.classify(&xs[0]).unwrap() < 1.0);
        extreme.output.biases[0] = -1e4;
        assert!(extreme.classify(&xs[0]).unwrap() > 0.0);
        assert!(classify(&clf, &[0.5; 3]).is_err());
    }

    #[test]
    fn single_class_labels_rejected() {
        let (xs, _) = separable(10, 4);
        let ys = vec![true; 10];
        let r = train_classifier(&encoder(), &xs, &ys, &ClassifierConfig::default(), &quick(5, 0.1));
        assert!(matches!(r, Err(Error::SingleClass)));
    }

    #[test]
    fn json_round_trip() {
        let (xs, ys) = separable(10, 5);
        let (clf, _) = train_classifier(&encoder(), &xs, &ys, &ClassifierConfig::default(), &quick(5, 0.1)).unwrap();
        assert_eq!(ClassifierModel::from_json(&clf.to_json().unwrap()).unwrap(), clf);
    }

    #[test]
    fn pretraining_comparison_report() {
        let (xs, ys) = separable(80, 6);
        let cfg = PipelineConfig {
            train: quick(200, 1.0),
            ..Default::default()
        };
        let a = compare_single_vs_both_class_pretraining(&xs, &ys, &cfg, 0.25).unwrap();
        assert_eq!(a.test_size, 20);
        assert_eq!(a.train_size, 60);
        assert!((a.delta - (a.single_class_accuracy - a.both_class_accuracy)).abs() < 1e-15);
        let b = compare_single_vs_both_class_pretraining(&xs, &ys, &cfg, 0.25).unwrap();
        assert_eq!(a, b);
    }
}
