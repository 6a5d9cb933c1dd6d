//! Adversarial-example generators: the white-box PGD noise attack, exhaustive
//! feature-twist and carrier-weight grids, stage-1 carrier selection by TPR,
//! and the SPSA search over ensemble carrier weights.

mod grid;
mod pgd;
mod spsa;
mod stage1;

pub use grid::{enumerate_weight_lattice, grid_env_weight_attack, grid_feature_twist_attack};
pub use pgd::{ensemble_pgd_attack, pgd_attack, PgdOptions};
pub use spsa::{spsa_attack, SpsaOptions};
pub use stage1::{stage1_select_candidates, Stage1Options};

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, MfccPipeline};
use crate::carriers::Carrier;
use crate::error::{Error, Result};
use crate::models::{SpeakerModel, Task, Thresholds};
use crate::perception::{PairFeatureExtractor, SrsModel};
use crate::scalar::Scalar;

/// Default carrier-weight budget (sum constraint).
pub const DEFAULT_WEIGHT_BUDGET: f64 = 0.08;

/// Tolerance when validating budgets.
pub const BUDGET_TOL: f64 = 1e-9;

/// Nonnegative carrier weights under a sum budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierWeights<S> {
    pub gamma: Vec<S>,
    pub epsilon: S,
}

impl<S: Scalar> CarrierWeights<S> {
    pub fn validate(&self) -> Result<()> {
        let tol = S::of_f64(BUDGET_TOL);
        if self.gamma.iter().any(|&g| g < -tol) {
            return Err(Error::BudgetViolation("negative carrier weight".into()));
        }
        let sum: S = self.gamma.iter().copied().sum();
        if sum > self.epsilon + tol {
            return Err(Error::BudgetViolation(format!(
                "weight sum {} exceeds budget {}",
                sum, self.epsilon
            )));
        }
        Ok(())
    }
}

/// Euclidean projection onto {gamma >= 0, sum(gamma) <= epsilon}.
/// Idempotent; feasible points pass through unchanged.
pub fn project_weights<S: Scalar>(gamma: &[S], epsilon: S) -> Vec<S> {
    let clipped: Vec<S> = gamma.iter().map(|&g| g.max(S::zero())).collect();
    let sum: S = clipped.iter().copied().sum();
    if sum <= epsilon {
        return clipped;
    }
    // Project the raw point onto the simplex {z >= 0, sum z = epsilon}.
    let mut sorted = gamma.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = S::zero();
    let mut tau = S::zero();
    for (j, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - epsilon) / S::of_usize(j + 1);
        if v - candidate > S::zero() {
            tau = candidate;
        } else {
            break;
        }
    }
    gamma.iter().map(|&g| (g - tau).max(S::zero())).collect()
}

/// Uniformly weighted surrogate models sharing an enrolled target label.
#[derive(Debug, Clone)]
pub struct SurrogateEnsemble<S> {
    pub models: Vec<SpeakerModel<S>>,
}

impl<S: Scalar> SurrogateEnsemble<S> {
    pub fn new(models: Vec<SpeakerModel<S>>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidArgument("ensemble needs at least one model".into()));
        }
        Ok(Self { models })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Uniform model weight 1/N.
    pub fn weight(&self) -> S {
        S::one() / S::of_usize(self.models.len())
    }

    /// p(target | clip) for every member, sharing the MFCC front end across
    /// members with identical feature configs.
    pub fn target_probabilities(&self, clip: &AudioClip<S>, target: &str) -> Result<Vec<S>> {
        let mut out = Vec::with_capacity(self.models.len());
        let mut cache: Option<(crate::audio::MfccConfig, u32, crate::audio::MfccMatrix<S>)> = None;
        for model in &self.models {
            let (cfg, rate) = match model {
                SpeakerModel::Neural(n) => (n.mfcc.clone(), n.sample_rate),
                SpeakerModel::Gmm(g) => (g.mfcc.clone(), g.sample_rate),
            };
            let reuse = matches!(&cache, Some((c, r, _)) if *c == cfg && *r == rate);
            if !reuse {
                let resampled = crate::audio::resample(clip, rate)?;
                let pipeline = MfccPipeline::new(&cfg, rate)?;
                let matrix = pipeline.compute(&resampled.samples)?;
                cache = Some((cfg, rate, matrix));
            }
            let matrix = &cache.as_ref().unwrap().2;

            let labels = model.labels();
            let idx = labels
                .iter()
                .position(|l| l == target)
                .ok_or_else(|| Error::UnknownLabel(target.to_string()))?;
            let p = match model {
                SpeakerModel::Neural(n) => {
                    n.probabilities_from_features(&matrix.pooled_mean_std())[idx]
                }
                SpeakerModel::Gmm(g) => {
                    let frames: Vec<Vec<S>> = matrix.rows().map(<[S]>::to_vec).collect();
                    let scores = g.scores_from_frames(&frames);
                    softmax(&scores)[idx]
                }
            };
            out.push(p);
        }
        Ok(out)
    }
}

fn softmax<S: Scalar>(z: &[S]) -> Vec<S> {
    let max = z.iter().fold(S::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<S> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// How an adversarial example was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AeKind {
    Pgd,
    FeatureTwistGrid,
    EnvWeightGrid,
    Spsa,
}

/// A finished adversarial example plus its search statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AeResult<S> {
    pub kind: AeKind,
    pub waveform: AudioClip<S>,
    pub target_label: String,
    pub final_loss: S,
    pub srs: Option<S>,
    pub srs_provenance: Option<String>,
    pub per_surrogate_success: Vec<bool>,
    /// Carrier weights for the weight-search attacks.
    pub weights: Option<CarrierWeights<S>>,
    /// (semitones, rate) for the feature-twist grid.
    pub twist: Option<(f64, f64)>,
    /// Linf budget for PGD.
    pub linf_epsilon: Option<S>,
    pub evaluations: usize,
    pub restarts: usize,
}

/// The ensemble objective of the weight-search attacks:
/// sum_n w_n (1 - p_n(y_t | x + sum_k gamma_k delta_k)) + c (8 - SRS).
/// Carriers are tiled to the clip length once; the SRS original-side
/// features are cached. Counts every evaluation.
pub struct EnsembleObjective<'a, S> {
    ensemble: &'a SurrogateEnsemble<S>,
    x: &'a AudioClip<S>,
    deltas: Vec<AudioClip<S>>,
    target: String,
    balance: S,
    srs_model: &'a SrsModel<S>,
    extractor: PairFeatureExtractor<S>,
    epsilon: S,
    evals: AtomicUsize,
}

impl<'a, S: Scalar> EnsembleObjective<'a, S> {
    pub fn new(
        ensemble: &'a SurrogateEnsemble<S>,
        x: &'a AudioClip<S>,
        carriers: &[&Carrier<S>],
        target: &str,
        balance: S,
        srs_model: &'a SrsModel<S>,
        epsilon: S,
    ) -> Result<Self> {
        if carriers.is_empty() {
            return Err(Error::InvalidArgument("no carriers supplied".into()));
        }
        for c in carriers {
            if c.waveform.sample_rate != x.sample_rate {
                return Err(Error::InvalidAudio(format!(
                    "carrier `{}` rate {} != clip rate {}",
                    c.id, c.waveform.sample_rate, x.sample_rate
                )));
            }
        }
        Ok(Self {
            ensemble,
            x,
            deltas: carriers.iter().map(|c| c.waveform.tiled_to(x.len())).collect(),
            target: target.to_string(),
            balance,
            srs_model,
            extractor: PairFeatureExtractor::new(x)?,
            epsilon,
            evals: AtomicUsize::new(0),
        })
    }

    pub fn k(&self) -> usize {
        self.deltas.len()
    }

    pub fn epsilon(&self) -> S {
        self.epsilon
    }

    pub fn evaluations(&self) -> usize {
        self.evals.load(Ordering::Relaxed)
    }

    /// Mix the adversarial waveform for a weight vector.
    pub fn mix(&self, gamma: &[S]) -> AudioClip<S> {
        let mut samples = self.x.samples.clone();
        for (delta, &g) in self.deltas.iter().zip(gamma) {
            if g != S::zero() {
                for (s, &d) in samples.iter_mut().zip(&delta.samples) {
                    *s += g * d;
                }
            }
        }
        AudioClip {
            samples,
            sample_rate: self.x.sample_rate,
        }
    }

    /// Evaluate the ensemble loss for a feasible weight vector.
    pub fn loss(&self, gamma: &[S]) -> Result<S> {
        if gamma.len() != self.deltas.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} carriers",
                gamma.len(),
                self.deltas.len()
            )));
        }
        CarrierWeights {
            gamma: gamma.to_vec(),
            epsilon: self.epsilon,
        }
        .validate()?;
        self.evals.fetch_add(1, Ordering::Relaxed);

        let ae = self.mix(gamma);
        let probs = self.ensemble.target_probabilities(&ae, &self.target)?;
        let w = self.ensemble.weight();
        let model_term: S = probs.iter().map(|&p| w * (S::one() - p)).sum();
        let srs = self.extractor.srs(self.srs_model, &ae)?;
        Ok(model_term + self.balance * (S::of_f64(8.0) - srs))
    }

    /// SRS of the mixed waveform (reporting path).
    pub fn srs_of(&self, gamma: &[S]) -> Result<S> {
        self.extractor.srs(self.srs_model, &self.mix(gamma))
    }

    /// Per-surrogate CSI success flags for a finished waveform.
    pub fn success_flags(&self, ae: &AudioClip<S>) -> Result<Vec<bool>> {
        self.ensemble
            .models
            .iter()
            .map(|m| {
                Ok(m.decide(ae, Task::Csi, &Thresholds::default())?
                    .outcome
                    .accepted_as(&self.target))
            })
            .collect()
    }

    pub fn srs_provenance(&self) -> String {
        self.srs_model.provenance.clone()
    }
}

/// Ensemble loss at a single weight vector (the spec-level entry point;
/// builds a one-shot objective).
#[allow(clippy::too_many_arguments)]
pub fn ensemble_loss<S: Scalar>(
    ensemble: &SurrogateEnsemble<S>,
    x: &AudioClip<S>,
    gamma: &[S],
    carriers: &[&Carrier<S>],
    target: &str,
    balance: S,
    srs_model: &SrsModel<S>,
    epsilon: S,
) -> Result<S> {
    EnsembleObjective::new(ensemble, x, carriers, target, balance, srs_model, epsilon)?
        .loss(gamma)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::fixtures::{desk_voices, synth_utterance};
    use crate::models::{train_neural_named, NeuralConfig};
    use crate::perception::{train_srs_from_features, ForestConfig};

    /// Tiny two-speaker corpus plus a trained model, for attack tests.
    pub fn tiny_model(seed: u64, hidden: Vec<usize>) -> (SpeakerModel<f64>, Vec<AudioClip<f64>>) {
        let voices = desk_voices(7, 2);
        let mut data = Vec::new();
        for (i, v) in voices.iter().enumerate() {
            for c in 0..12 {
                data.push((
                    v.id.clone(),
                    synth_utterance::<f64>(v, seed * 1000 + (i * 50 + c) as u64, 0.6, 16_000),
                ));
            }
        }
        let cfg = NeuralConfig {
            hidden,
            epochs: 60,
            seed,
            ..NeuralConfig::default()
        };
        let model = train_neural_named(&data, &cfg, 16_000, "test").unwrap();
        let clips = data.into_iter().map(|(_, c)| c).collect();
        (SpeakerModel::Neural(model), clips)
    }

    /// SRS model trained on heuristic labels over noise mixes of a clip.
    pub fn tiny_srs(clip: &AudioClip<f64>) -> SrsModel<f64> {
        use crate::audio::{mix_at_scr, ScrLevel};
        use crate::perception::{extract_quality_features, heuristic_score};
        let noise: Carrier<f64> =
            crate::carriers::make_noise_carrier(clip.len(), clip.sample_rate, 3).unwrap();
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for scr in [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0] {
            let p = mix_at_scr(clip, &noise.waveform, ScrLevel(scr)).unwrap();
            let f = extract_quality_features(clip, &p).unwrap();
            labels.push(heuristic_score(&f));
            feats.push(f);
        }
        for _ in 0..3 {
            let f = extract_quality_features(clip, clip).unwrap();
            labels.push(heuristic_score(&f));
            feats.push(f);
        }
        train_srs_from_features(
            &feats,
            &labels,
            &ForestConfig {
                trees: 30,
                ..ForestConfig::default()
            },
            "heuristic",
        )
        .unwrap()
    }

    pub fn env_carriers(n: usize, len: usize) -> Vec<Carrier<f64>> {
        let cats = crate::fixtures::CARRIER_CATEGORIES;
        (0..n)
            .map(|i| {
                let mut clip: AudioClip<f64> = crate::fixtures::synth_environmental(
                    cats[i % cats.len()],
                    i / cats.len(),
                    7,
                    len as f64 / 16_000.0,
                    16_000,
                );
                clip.normalize_power().unwrap();
                Carrier {
                    id: format!("c{i:02}"),
                    kind: crate::carriers::CarrierKind::Environmental,
                    category: Some(cats[i % cats.len()].to_string()),
                    waveform: clip,
                    semitones: 0.0,
                    rate: 1.0,
                }
            })
            .collect()
    }
}
