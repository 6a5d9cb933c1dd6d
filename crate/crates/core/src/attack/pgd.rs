//! Projected gradient descent in the unrestricted Linf space with a Gaussian
//! start, against a single gradient-exposing (neural) surrogate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AeKind, AeResult};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::models::{SpeakerModel, Task, Thresholds};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PgdOptions {
    /// Linf budget on the waveform.
    pub epsilon: f64,
    pub steps: usize,
    /// Per-step magnitude; defaults to epsilon / 20.
    pub step_size: Option<f64>,
    pub seed: u64,
}

impl Default for PgdOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            steps: 100,
            step_size: None,
            seed: 0,
        }
    }
}

/// Run targeted PGD. Returns the AE and the per-step loss trace.
pub fn pgd_attack<S: Scalar>(
    model: &SpeakerModel<S>,
    x: &AudioClip<S>,
    target: &str,
    opts: &PgdOptions,
) -> Result<(AeResult<S>, Vec<S>)> {
    let neural = match model {
        SpeakerModel::Neural(n) => n,
        SpeakerModel::Gmm(_) => {
            return Err(Error::InvalidArgument(
                "input gradients unavailable for the gmm-ubm family".into(),
            ))
        }
    };
    let labels = model.labels();
    let target_idx = labels
        .iter()
        .position(|l| l == target)
        .ok_or_else(|| Error::UnknownLabel(target.to_string()))?;
    let x = crate::audio::resample(x, neural.sample_rate)?;
    let eps = S::of_f64(opts.epsilon);
    let alpha = S::of_f64(opts.step_size.unwrap_or(opts.epsilon / 20.0));

    // Gaussian start, clamped into the Linf ball.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sigma = opts.epsilon / 2.0;
    let mut delta: Vec<S> = (0..x.len())
        .map(|_| {
            let d: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
            S::of_f64((d * sigma).clamp(-opts.epsilon, opts.epsilon))
        })
        .collect();

    let mut trace = Vec::with_capacity(opts.steps);
    let mut adversarial = add(&x, &delta);
    for _ in 0..opts.steps {
        let (loss, grad) = neural.waveform_gradient(&adversarial, target_idx)?;
        trace.push(loss);
        for (d, &g) in delta.iter_mut().zip(&grad) {
            let step = if g > S::zero() {
                alpha
            } else if g < S::zero() {
                -alpha
            } else {
                S::zero()
            };
            *d = (*d - step).max(-eps).min(eps);
        }
        adversarial = add(&x, &delta);
    }
    let final_loss = neural.waveform_gradient(&adversarial, target_idx)?.0;

    let success = model
        .decide(&adversarial, Task::Csi, &Thresholds::default())?
        .outcome
        .accepted_as(target);

    Ok((
        AeResult {
            kind: AeKind::Pgd,
            waveform: adversarial,
            target_label: target.to_string(),
            final_loss,
            srs: None,
            srs_provenance: None,
            per_surrogate_success: vec![success],
            weights: None,
            twist: None,
            linf_epsilon: Some(eps),
            evaluations: opts.steps + 1,
            restarts: 1,
        },
        trace,
    ))
}

/// PGD against an ensemble: the descent direction is the mean waveform
/// gradient over the neural members. Errors when no member exposes
/// gradients.
pub fn ensemble_pgd_attack<S: Scalar>(
    ensemble: &super::SurrogateEnsemble<S>,
    x: &AudioClip<S>,
    target: &str,
    opts: &PgdOptions,
) -> Result<(AeResult<S>, Vec<S>)> {
    let members: Vec<(&crate::models::NeuralModel<S>, usize)> = ensemble
        .models
        .iter()
        .filter_map(|m| match m {
            SpeakerModel::Neural(n) => {
                let idx = n.labels().iter().position(|l| l == target)?;
                Some((n, idx))
            }
            SpeakerModel::Gmm(_) => None,
        })
        .collect();
    if members.is_empty() {
        return Err(Error::InvalidArgument(
            "no gradient-exposing neural member enrolls the target".into(),
        ));
    }
    let rate = members[0].0.sample_rate;
    let x = crate::audio::resample(x, rate)?;
    let eps = S::of_f64(opts.epsilon);
    let alpha = S::of_f64(opts.step_size.unwrap_or(opts.epsilon / 20.0));
    let inv_n = S::one() / S::of_usize(members.len());

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sigma = opts.epsilon / 2.0;
    let mut delta: Vec<S> = (0..x.len())
        .map(|_| {
            let d: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
            S::of_f64((d * sigma).clamp(-opts.epsilon, opts.epsilon))
        })
        .collect();

    let mut trace = Vec::with_capacity(opts.steps);
    let mut adversarial = add(&x, &delta);
    for _ in 0..opts.steps {
        let mut loss = S::zero();
        let mut grad = vec![S::zero(); x.len()];
        for &(n, idx) in &members {
            let (l, g) = n.waveform_gradient(&adversarial, idx)?;
            loss += l * inv_n;
            for (acc, &v) in grad.iter_mut().zip(&g) {
                *acc += v * inv_n;
            }
        }
        trace.push(loss);
        for (d, &g) in delta.iter_mut().zip(&grad) {
            let step = if g > S::zero() {
                alpha
            } else if g < S::zero() {
                -alpha
            } else {
                S::zero()
            };
            *d = (*d - step).max(-eps).min(eps);
        }
        adversarial = add(&x, &delta);
    }
    let mut final_loss = S::zero();
    for &(n, idx) in &members {
        final_loss += n.waveform_gradient(&adversarial, idx)?.0 * inv_n;
    }

    let mut per_surrogate_success = Vec::with_capacity(ensemble.models.len());
    for m in &ensemble.models {
        per_surrogate_success.push(
            m.decide(&adversarial, Task::Csi, &Thresholds::default())?
                .outcome
                .accepted_as(target),
        );
    }

    Ok((
        AeResult {
            kind: AeKind::Pgd,
            waveform: adversarial,
            target_label: target.to_string(),
            final_loss,
            srs: None,
            srs_provenance: None,
            per_surrogate_success,
            weights: None,
            twist: None,
            linf_epsilon: Some(eps),
            evaluations: (opts.steps + 1) * members.len(),
            restarts: 1,
        },
        trace,
    ))
}

fn add<S: Scalar>(x: &AudioClip<S>, delta: &[S]) -> AudioClip<S> {
    AudioClip {
        samples: x.samples.iter().zip(delta).map(|(&a, &d)| a + d).collect(),
        sample_rate: x.sample_rate,
    }
}
