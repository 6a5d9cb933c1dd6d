//! Small feed-forward speaker classifier over mean+std pooled MFCC, trained
//! with Adam. Exposes exact input gradients at both the feature level and the
//! waveform level (chained through the MFCC front end) for gradient attacks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, MfccConfig, MfccPipeline};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Architecture presets standing in for the different surrogate families:
/// `wide-*` are single wide layers, `deep-*` are two-layer stacks.
pub const ARCH_PRESETS: [(&str, &[usize]); 4] = [
    ("wide-a", &[96]),
    ("wide-b", &[72]),
    ("deep-a", &[64, 32]),
    ("deep-b", &[48, 24]),
];

pub fn preset_hidden(name: &str) -> Option<Vec<usize>> {
    ARCH_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, h)| h.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub mfcc: MfccConfig,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            epochs: 150,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
            mfcc: MfccConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer<S> {
    /// Row-major `rows x cols` weights.
    w: Vec<S>,
    b: Vec<S>,
    rows: usize,
    cols: usize,
}

impl<S: Scalar> Layer<S> {
    fn forward(&self, x: &[S]) -> Vec<S> {
        (0..self.rows)
            .map(|r| {
                let row = &self.w[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).map(|(&w, &v)| w * v).sum::<S>() + self.b[r]
            })
            .collect()
    }

    /// x^T gradient: returns W^T d for a downstream gradient d.
    fn back_input(&self, d: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.cols];
        for (r, &dr) in d.iter().enumerate() {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * dr;
            }
        }
        out
    }
}

/// Trained classifier. Scores are softmax probabilities in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralModel<S> {
    labels: Vec<String>,
    layers: Vec<Layer<S>>,
    feat_mean: Vec<S>,
    feat_std: Vec<S>,
    pub mfcc: MfccConfig,
    pub sample_rate: u32,
    pub arch_name: String,
}

impl<S: Scalar> NeuralModel<S> {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Pooled (unstandardized) features for a clip at the model's rate.
    pub fn pooled_features(&self, clip: &AudioClip<S>) -> Result<Vec<S>> {
        let clip = crate::audio::resample(clip, self.sample_rate)?;
        let pipeline = MfccPipeline::new(&self.mfcc, self.sample_rate)?;
        Ok(pipeline.compute(&clip.samples)?.pooled_mean_std())
    }

    fn standardize(&self, pooled: &[S]) -> Vec<S> {
        pooled
            .iter()
            .zip(self.feat_mean.iter().zip(&self.feat_std))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }

    /// Forward pass from pooled features; returns per-layer activations with
    /// the softmax output last.
    fn forward_from_pooled(&self, pooled: &[S]) -> Vec<Vec<S>> {
        let mut acts = vec![self.standardize(pooled)];
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(acts.last().unwrap());
            if i + 1 < n {
                for v in &mut z {
                    *v = v.max(S::zero()); // ReLU
                }
            } else {
                z = softmax(&z);
            }
            acts.push(z);
        }
        acts
    }

    pub fn probabilities_from_features(&self, pooled: &[S]) -> Vec<S> {
        self.forward_from_pooled(pooled).pop().unwrap()
    }

    pub fn probabilities(&self, clip: &AudioClip<S>) -> Result<Vec<S>> {
        Ok(self.probabilities_from_features(&self.pooled_features(clip)?))
    }

    /// Gradient of the targeted cross-entropy loss -log p[target] with
    /// respect to the pooled feature vector.
    pub fn input_gradient(&self, pooled: &[S], target: usize) -> Vec<S> {
        let acts = self.forward_from_pooled(pooled);
        let d_pre = self.backprop_to_input(&acts, target);
        // Chain through standardization.
        d_pre
            .iter()
            .zip(&self.feat_std)
            .map(|(&d, &s)| d / s)
            .collect()
    }

    /// Backprop from the softmax output to the standardized input.
    fn backprop_to_input(&self, acts: &[Vec<S>], target: usize) -> Vec<S> {
        let probs = acts.last().unwrap();
        let mut d: Vec<S> = probs.clone();
        d[target] -= S::one();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            d = layer.back_input(&d);
            if i > 0 {
                for (g, &a) in d.iter_mut().zip(&acts[i]) {
                    if a <= S::zero() {
                        *g = S::zero();
                    }
                }
            }
        }
        d
    }

    /// Targeted loss -log p[target] plus its gradient with respect to the
    /// waveform, chained through pooling and the MFCC front end. The clip
    /// must already be at the model's sample rate.
    pub fn waveform_gradient(&self, clip: &AudioClip<S>, target: usize) -> Result<(S, Vec<S>)> {
        if clip.sample_rate != self.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "waveform gradient needs {} Hz input, got {}",
                self.sample_rate, clip.sample_rate
            )));
        }
        let pipeline = MfccPipeline::new(&self.mfcc, self.sample_rate)?;
        let (matrix, cache) = pipeline.forward_cached(&clip.samples)?;
        let pooled = matrix.pooled_mean_std();
        let acts = self.forward_from_pooled(&pooled);
        let p_target = acts.last().unwrap()[target];
        let loss = -(p_target.max(S::of_f64(1e-300))).ln();

        let d_std = self.backprop_to_input(&acts, target);
        let d_pooled: Vec<S> = d_std
            .iter()
            .zip(&self.feat_std)
            .map(|(&d, &s)| d / s)
            .collect();

        // Pooling backprop: mean and population-std with epsilon.
        let frames = matrix.frames();
        let coeffs = matrix.coefficients();
        let mean = matrix.mean();
        let inv_f = S::one() / S::of_usize(frames);
        // Recover sigma from the pooled vector (second half).
        let sigma = &pooled[coeffs..];
        let mut d_cells = vec![S::zero(); frames * coeffs];
        for (f, row) in matrix.rows().enumerate() {
            for c in 0..coeffs {
                let d_mu = d_pooled[c] * inv_f;
                let d_sigma = d_pooled[coeffs + c] * (row[c] - mean[c]) * inv_f / sigma[c];
                d_cells[f * coeffs + c] = d_mu + d_sigma;
            }
        }

        Ok((loss, pipeline.backprop(&cache, &d_cells)))
    }
}

fn softmax<S: Scalar>(z: &[S]) -> Vec<S> {
    let max = z.iter().fold(S::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<S> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Train on labeled clips. Labels are collected in first-appearance order.
pub fn train_neural<S: Scalar>(
    dataset: &[(String, AudioClip<S>)],
    cfg: &NeuralConfig,
    sample_rate: u32,
) -> Result<NeuralModel<S>> {
    train_neural_named(dataset, cfg, sample_rate, "custom")
}

pub fn train_neural_named<S: Scalar>(
    dataset: &[(String, AudioClip<S>)],
    cfg: &NeuralConfig,
    sample_rate: u32,
    arch_name: &str,
) -> Result<NeuralModel<S>> {
    let mut labels: Vec<String> = Vec::new();
    for (l, _) in dataset {
        if !labels.contains(l) {
            labels.push(l.clone());
        }
    }
    if labels.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 speakers to train a classifier".into(),
        ));
    }
    for l in &labels {
        let count = dataset.iter().filter(|(dl, _)| dl == l).count();
        if count < 10 {
            return Err(Error::InsufficientData(format!(
                "speaker `{l}` has {count} clips; need at least 10"
            )));
        }
    }

    let pipeline = MfccPipeline::new(&cfg.mfcc, sample_rate)?;
    let mut features: Vec<Vec<S>> = Vec::with_capacity(dataset.len());
    let mut targets: Vec<usize> = Vec::with_capacity(dataset.len());
    for (label, clip) in dataset {
        let clip = crate::audio::resample(clip, sample_rate)?;
        features.push(pipeline.compute(&clip.samples)?.pooled_mean_std());
        targets.push(labels.iter().position(|l| l == label).unwrap());
    }
    train_neural_from_features(features, targets, labels, cfg, sample_rate, arch_name)
}

/// Core trainer over precomputed pooled features (also used by tests).
pub fn train_neural_from_features<S: Scalar>(
    features: Vec<Vec<S>>,
    targets: Vec<usize>,
    labels: Vec<String>,
    cfg: &NeuralConfig,
    sample_rate: u32,
    arch_name: &str,
) -> Result<NeuralModel<S>> {
    let dim = features.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::InsufficientData("empty feature vectors".into()));
    }
    if labels.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 speakers to train a classifier".into(),
        ));
    }

    // Standardization statistics.
    let n = features.len();
    let mut feat_mean = vec![S::zero(); dim];
    for f in &features {
        for (m, &x) in feat_mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    for m in &mut feat_mean {
        *m /= S::of_usize(n);
    }
    let mut feat_std = vec![S::zero(); dim];
    for f in &features {
        for ((s, &x), &m) in feat_std.iter_mut().zip(f).zip(&feat_mean) {
            let d = x - m;
            *s += d * d;
        }
    }
    for s in &mut feat_std {
        *s = (*s / S::of_usize(n) + S::of_f64(1e-8)).sqrt();
    }

    let standardized: Vec<Vec<S>> = features
        .iter()
        .map(|f| {
            f.iter()
                .zip(feat_mean.iter().zip(&feat_std))
                .map(|(&x, (&m, &s))| (x - m) / s)
                .collect()
        })
        .collect();

    // He-initialized layers.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sizes = vec![dim];
    sizes.extend(&cfg.hidden);
    sizes.push(labels.len());
    let mut layers: Vec<Layer<S>> = Vec::new();
    for win in sizes.windows(2) {
        let (cols, rows) = (win[0], win[1]);
        let scale = (2.0 / cols as f64).sqrt();
        let w = (0..rows * cols)
            .map(|_| S::of_f64(rng.sample::<f64, _>(rand_distr::StandardNormal) * scale))
            .collect();
        layers.push(Layer {
            w,
            b: vec![S::zero(); rows],
            rows,
            cols,
        });
    }

    // Adam state.
    let mut m_w: Vec<Vec<S>> = layers.iter().map(|l| vec![S::zero(); l.w.len()]).collect();
    let mut v_w = m_w.clone();
    let mut m_b: Vec<Vec<S>> = layers.iter().map(|l| vec![S::zero(); l.b.len()]).collect();
    let mut v_b = m_b.clone();
    let (beta1, beta2, eps) = (S::of_f64(0.9), S::of_f64(0.999), S::of_f64(1e-8));
    let lr = S::of_f64(cfg.learning_rate);
    let mut step = 0usize;

    let mut order: Vec<usize> = (0..n).collect();
    let mut prev_epoch_loss = S::infinity();
    let n_layers = layers.len();

    for _epoch in 0..cfg.epochs {
        // Seeded shuffle.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = S::zero();

        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut g_w: Vec<Vec<S>> =
                layers.iter().map(|l| vec![S::zero(); l.w.len()]).collect();
            let mut g_b: Vec<Vec<S>> =
                layers.iter().map(|l| vec![S::zero(); l.b.len()]).collect();

            for &idx in batch {
                // Forward.
                let mut acts = vec![standardized[idx].clone()];
                for (i, layer) in layers.iter().enumerate() {
                    let mut z = layer.forward(acts.last().unwrap());
                    if i + 1 < n_layers {
                        for v in &mut z {
                            *v = v.max(S::zero());
                        }
                    } else {
                        z = softmax(&z);
                    }
                    acts.push(z);
                }
                let probs = acts.last().unwrap();
                epoch_loss -= probs[targets[idx]].max(S::of_f64(1e-300)).ln();

                // Backward.
                let mut d: Vec<S> = probs.clone();
                d[targets[idx]] -= S::one();
                for i in (0..n_layers).rev() {
                    let input = &acts[i];
                    for (r, &dr) in d.iter().enumerate() {
                        g_b[i][r] += dr;
                        let row = &mut g_w[i][r * layers[i].cols..(r + 1) * layers[i].cols];
                        for (g, &x) in row.iter_mut().zip(input) {
                            *g += dr * x;
                        }
                    }
                    if i > 0 {
                        d = layers[i].back_input(&d);
                        for (g, &a) in d.iter_mut().zip(&acts[i]) {
                            if a <= S::zero() {
                                *g = S::zero();
                            }
                        }
                    }
                }
            }

            // Adam update (batch-mean gradients).
            step += 1;
            let inv = S::one() / S::of_usize(batch.len());
            let bc1 = S::one() - beta1.powi(step as i32);
            let bc2 = S::one() - beta2.powi(step as i32);
            for i in 0..n_layers {
                for (k, g) in g_w[i].iter().enumerate() {
                    let g = *g * inv;
                    m_w[i][k] = beta1 * m_w[i][k] + (S::one() - beta1) * g;
                    v_w[i][k] = beta2 * v_w[i][k] + (S::one() - beta2) * g * g;
                    layers[i].w[k] -= lr * (m_w[i][k] / bc1) / ((v_w[i][k] / bc2).sqrt() + eps);
                }
                for (k, g) in g_b[i].iter().enumerate() {
                    let g = *g * inv;
                    m_b[i][k] = beta1 * m_b[i][k] + (S::one() - beta1) * g;
                    v_b[i][k] = beta2 * v_b[i][k] + (S::one() - beta2) * g * g;
                    layers[i].b[k] -= lr * (m_b[i][k] / bc1) / ((v_b[i][k] / bc2).sqrt() + eps);
                }
            }
        }

        // Early exit once the fit is essentially perfect.
        let epoch_loss = epoch_loss / S::of_usize(n);
        if epoch_loss < S::of_f64(1e-5) && epoch_loss >= prev_epoch_loss {
            break;
        }
        prev_epoch_loss = epoch_loss;
    }

    Ok(NeuralModel {
        labels,
        layers,
        feat_mean,
        feat_std,
        mfcc: cfg.mfcc.clone(),
        sample_rate,
        arch_name: arch_name.to_string(),
    })
}
