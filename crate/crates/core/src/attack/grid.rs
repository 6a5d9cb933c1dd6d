//! Exhaustive grid attacks: the 510-point feature-twist grid and the
//! carrier-weight lattice for small candidate sets.

use rayon::prelude::*;

use super::{AeKind, AeResult, CarrierWeights, EnsembleObjective, SurrogateEnsemble};
use crate::audio::AudioClip;
use crate::carriers::{feature_twist_grid, make_feature_twisted, Carrier};
use crate::error::{Error, Result};
use crate::models::SpeakerModel;
use crate::perception::{PairFeatureExtractor, SrsModel};
use crate::scalar::Scalar;

/// Largest candidate set the weight lattice will enumerate.
pub const MAX_GRID_CARRIERS: usize = 3;

/// Exhaustively search the feature-twist grid (pitch -25..=25 by rate
/// 0.2..=2.0 step 0.2) for the twist of `x` minimizing
/// (1 - p(y_t)) + c * (8 - SRS). Visits exactly 510 points.
pub fn grid_feature_twist_attack<S: Scalar>(
    model: &SpeakerModel<S>,
    x: &AudioClip<S>,
    target: &str,
    balance: S,
    srs_model: &SrsModel<S>,
) -> Result<AeResult<S>> {
    let labels = model.labels();
    let target_idx = labels
        .iter()
        .position(|l| l == target)
        .ok_or_else(|| Error::UnknownLabel(target.to_string()))?;
    let extractor = PairFeatureExtractor::new(x)?;
    let grid = feature_twist_grid();
    let eight = S::of_f64(8.0);

    let evaluated: Result<Vec<(S, usize, AudioClip<S>, (f64, f64))>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(s, r))| {
            let carrier = make_feature_twisted(x, s, r)?;
            let ae = x.add_scaled(&carrier.waveform, S::one())?;
            let p = match model {
                SpeakerModel::Neural(n) => n.probabilities(&ae)?[target_idx],
                SpeakerModel::Gmm(_) => model.probabilities(&ae)?[target_idx],
            };
            let srs = extractor.srs(srs_model, &ae)?;
            let loss = (S::one() - p) + balance * (eight - srs);
            Ok((loss, i, ae, (s, r)))
        })
        .collect();
    let evaluated = evaluated?;
    assert_eq!(evaluated.len(), 510);

    let best = evaluated
        .into_iter()
        .min_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        })
        .expect("nonempty grid");
    let (loss, _, waveform, twist) = best;
    let srs = extractor.srs(srs_model, &waveform)?;
    let success = {
        use crate::models::{Task, Thresholds};
        model
            .decide(&waveform, Task::Csi, &Thresholds::default())?
            .outcome
            .accepted_as(target)
    };

    Ok(AeResult {
        kind: AeKind::FeatureTwistGrid,
        waveform,
        target_label: target.to_string(),
        final_loss: loss,
        srs: Some(srs),
        srs_provenance: Some(srs_model.provenance.clone()),
        per_surrogate_success: vec![success],
        weights: None,
        twist: Some(twist),
        linf_epsilon: None,
        evaluations: 510,
        restarts: 1,
    })
}

/// All lattice points {0, step, 2 step, ...} ^ K with sum <= epsilon, where
/// step = 0.1 * epsilon.
pub fn enumerate_weight_lattice<S: Scalar>(k: usize, epsilon: S) -> Vec<Vec<S>> {
    let step = epsilon * S::of_f64(0.1);
    let mut out = Vec::new();
    let mut current = vec![0usize; k];
    loop {
        let total: usize = current.iter().sum();
        if total <= 10 {
            out.push(current.iter().map(|&i| step * S::of_usize(i)).collect());
        }
        // Odometer increment over digits 0..=10.
        let mut pos = 0;
        loop {
            if pos == k {
                return out;
            }
            current[pos] += 1;
            if current[pos] <= 10 {
                break;
            }
            current[pos] = 0;
            pos += 1;
        }
    }
}

/// Exhaustive search over the weight lattice for a small carrier set,
/// minimizing the same objective as the SPSA path (single-model ensembles
/// make this the oracle for oracle-equivalence checks).
pub fn grid_env_weight_attack<S: Scalar>(
    model: &SpeakerModel<S>,
    x: &AudioClip<S>,
    target: &str,
    carriers: &[&Carrier<S>],
    epsilon: S,
    balance: S,
    srs_model: &SrsModel<S>,
) -> Result<AeResult<S>> {
    if carriers.len() > MAX_GRID_CARRIERS {
        return Err(Error::InvalidArgument(format!(
            "{} carriers exceed the exhaustive-grid budget of {MAX_GRID_CARRIERS}; use the SPSA path",
            carriers.len()
        )));
    }
    let ensemble = SurrogateEnsemble::new(vec![model.clone()])?;
    let objective =
        EnsembleObjective::new(&ensemble, x, carriers, target, balance, srs_model, epsilon)?;

    let lattice = enumerate_weight_lattice(carriers.len(), epsilon);
    let mut best: Option<(S, Vec<S>)> = None;
    for gamma in lattice {
        let loss = objective.loss(&gamma)?;
        if best.as_ref().map_or(true, |(b, _)| loss < *b) {
            best = Some((loss, gamma));
        }
    }
    let (final_loss, gamma) = best.expect("lattice nonempty");
    let waveform = objective.mix(&gamma);
    let srs = objective.srs_of(&gamma)?;
    let per_surrogate_success = objective.success_flags(&waveform)?;
    let evaluations = objective.evaluations();

    Ok(AeResult {
        kind: AeKind::EnvWeightGrid,
        waveform,
        target_label: target.to_string(),
        final_loss,
        srs: Some(srs),
        srs_provenance: Some(srs_model.provenance.clone()),
        per_surrogate_success,
        weights: Some(CarrierWeights {
            gamma,
            epsilon,
        }),
        twist: None,
        linf_epsilon: None,
        evaluations,
        restarts: 1,
    })
}
