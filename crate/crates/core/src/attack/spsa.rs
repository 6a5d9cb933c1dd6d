//! Simultaneous perturbation stochastic approximation over carrier weights,
//! with Rademacher directions, projection after every update, and random
//! restarts keeping the best final loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    project_weights, AeKind, AeResult, CarrierWeights, EnsembleObjective, SurrogateEnsemble,
};
use crate::audio::AudioClip;
use crate::carriers::Carrier;
use crate::error::{Error, Result};
use crate::fixtures::mix_seed;
use crate::perception::SrsModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpsaOptions {
    /// Weight-sum budget.
    pub epsilon: f64,
    pub steps: usize,
    pub restarts: usize,
    /// Perception balance factor c.
    pub balance: f64,
    pub seed: u64,
}

impl Default for SpsaOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.08,
            steps: 500,
            restarts: 50,
            balance: 0.1,
            seed: 0,
        }
    }
}

/// Standard SPSA gain exponents.
const ALPHA: f64 = 0.602;
const GAMMA_EXP: f64 = 0.101;

struct RestartOutcome<S> {
    loss: S,
    gamma: Vec<S>,
}

/// Minimize the ensemble loss over the carrier-weight simplex. Restarts run
/// independently (in parallel) from seeded random feasible points; the
/// restart with the lowest final loss wins, ties broken by restart index.
pub fn spsa_attack<S: Scalar>(
    ensemble: &SurrogateEnsemble<S>,
    x: &AudioClip<S>,
    target: &str,
    candidates: &[&Carrier<S>],
    srs_model: &SrsModel<S>,
    opts: &SpsaOptions,
) -> Result<AeResult<S>> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty candidate carrier set".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument("need at least one restart".into()));
    }
    let epsilon = S::of_f64(opts.epsilon);
    let objective = EnsembleObjective::new(
        ensemble,
        x,
        candidates,
        target,
        S::of_f64(opts.balance),
        srs_model,
        epsilon,
    )?;

    let outcomes: Result<Vec<RestartOutcome<S>>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| run_restart(&objective, mix_seed(opts.seed, r as u64), opts))
        .collect();
    let outcomes = outcomes?;

    let best = outcomes
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.loss
                .partial_cmp(&b.loss)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ia.cmp(ib))
        })
        .map(|(_, o)| o)
        .expect("at least one restart");

    let waveform = objective.mix(&best.gamma);
    let srs = objective.srs_of(&best.gamma)?;
    let per_surrogate_success = objective.success_flags(&waveform)?;

    Ok(AeResult {
        kind: AeKind::Spsa,
        waveform,
        target_label: target.to_string(),
        final_loss: best.loss,
        srs: Some(srs),
        srs_provenance: Some(objective.srs_provenance()),
        per_surrogate_success,
        weights: Some(CarrierWeights {
            gamma: best.gamma.clone(),
            epsilon,
        }),
        twist: None,
        linf_epsilon: None,
        evaluations: objective.evaluations(),
        restarts: opts.restarts,
    })
}

fn run_restart<S: Scalar>(
    objective: &EnsembleObjective<S>,
    seed: u64,
    opts: &SpsaOptions,
) -> Result<RestartOutcome<S>> {
    let k = objective.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epsilon = objective.epsilon();

    // Random feasible start.
    let raw: Vec<S> = (0..k)
        .map(|_| S::of_f64(rng.gen_range(0.0..opts.epsilon / k as f64)))
        .collect();
    let mut gamma = project_weights(&raw, epsilon);

    let big_a = 0.1 * opts.steps as f64;
    let c0 = 0.05 * opts.epsilon;
    // The step scale is calibrated from the first gradient estimate so the
    // first move is at most 0.1 * epsilon per coordinate.
    let mut a_scale: Option<f64> = None;

    // Every probe is a feasible (projected) point whose loss was paid for;
    // the restart returns the best point it evaluated, not the bare
    // trajectory endpoint. The perception term is piecewise constant, so
    // endpoints alone are noisy.
    let mut best: Option<RestartOutcome<S>> = None;
    let consider = |loss: S, gamma: &[S], best: &mut Option<RestartOutcome<S>>| {
        if best.as_ref().map_or(true, |b| loss < b.loss) {
            *best = Some(RestartOutcome {
                loss,
                gamma: gamma.to_vec(),
            });
        }
    };

    for t in 1..=opts.steps {
        let ct = S::of_f64(c0 / (t as f64).powf(GAMMA_EXP));
        let direction: Vec<S> = (0..k)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    S::one()
                } else {
                    -S::one()
                }
            })
            .collect();
        let probe = |sign: S| -> Vec<S> {
            let moved: Vec<S> = gamma
                .iter()
                .zip(&direction)
                .map(|(&g, &d)| g + sign * ct * d)
                .collect();
            project_weights(&moved, epsilon)
        };
        let probe_plus = probe(S::one());
        let probe_minus = probe(-S::one());
        let loss_plus = objective.loss(&probe_plus)?;
        let loss_minus = objective.loss(&probe_minus)?;
        consider(loss_plus, &probe_plus, &mut best);
        consider(loss_minus, &probe_minus, &mut best);
        let diff = (loss_plus - loss_minus) / (S::of_f64(2.0) * ct);
        let ghat: Vec<S> = direction.iter().map(|&d| diff * d).collect();

        let a = *a_scale.get_or_insert_with(|| {
            let gmax = ghat
                .iter()
                .fold(0.0f64, |m, g| m.max(g.as_f64().abs()))
                .max(1e-12);
            0.1 * opts.epsilon * (1.0 + big_a).powf(ALPHA) / gmax
        });
        let at = S::of_f64(a / (t as f64 + big_a).powf(ALPHA));
        let moved: Vec<S> = gamma.iter().zip(&ghat).map(|(&g, &h)| g - at * h).collect();
        gamma = project_weights(&moved, epsilon);
    }

    let final_loss = objective.loss(&gamma)?;
    consider(final_loss, &gamma, &mut best);
    Ok(best.expect("at least one evaluation"))
}

#[cfg(test)]
mod tests {
    use super::super::grid::grid_env_weight_attack;
    use super::super::test_support::{env_carriers, tiny_model, tiny_srs};
    use super::*;

    #[test]
    fn quadratic_objective_reaches_analytic_optimum() {
        // Probe the SPSA core against a known convex quadratic on the
        // simplex by bypassing the audio objective: minimize
        // f(g) = |g - p|^2 with feasible p.
        let p = [0.03f64, 0.02, 0.01];
        let epsilon = 0.08f64;
        let f = |g: &[f64]| -> f64 {
            g.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum()
        };

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut gamma = project_weights(&[0.05f64, 0.0, 0.0], epsilon);
        let steps = 500;
        let big_a = 0.1 * steps as f64;
        let c0 = 0.05 * epsilon;
        let mut a_scale: Option<f64> = None;
        for t in 1..=steps {
            let ct = c0 / (t as f64).powf(GAMMA_EXP);
            let dir: Vec<f64> = (0..3)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            let plus: Vec<f64> = gamma.iter().zip(&dir).map(|(g, d)| g + ct * d).collect();
            let minus: Vec<f64> = gamma.iter().zip(&dir).map(|(g, d)| g - ct * d).collect();
            let diff =
                (f(&project_weights(&plus, epsilon)) - f(&project_weights(&minus, epsilon)))
                    / (2.0 * ct);
            let ghat: Vec<f64> = dir.iter().map(|d| diff * d).collect();
            let a = *a_scale.get_or_insert_with(|| {
                let gmax = ghat.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-12);
                0.1 * epsilon * (1.0 + big_a).powf(ALPHA) / gmax
            });
            let at = a / (t as f64 + big_a).powf(ALPHA);
            let moved: Vec<f64> = gamma.iter().zip(&ghat).map(|(g, h)| g - at * h).collect();
            gamma = project_weights(&moved, epsilon);
        }
        for (g, expect) in gamma.iter().zip(&p) {
            assert!((g - expect).abs() < 1e-2, "{g} vs {expect}");
        }
    }

    #[test]
    fn spsa_close_to_grid_oracle_on_k2() {
        let (model, clips) = tiny_model(6, vec![16]);
        let x = &clips[0];
        let srs = tiny_srs(x);
        let carriers = env_carriers(2, x.len());
        let refs: Vec<&Carrier<f64>> = carriers.iter().collect();
        let oracle = grid_env_weight_attack(&model, x, "spk1", &refs, 0.08, 0.1, &srs).unwrap();

        let ensemble = SurrogateEnsemble::new(vec![model]).unwrap();
        let opts = SpsaOptions {
            steps: 150,
            restarts: 3,
            seed: 9,
            ..SpsaOptions::default()
        };
        let result = spsa_attack(&ensemble, x, "spk1", &refs, &srs, &opts).unwrap();
        assert!(
            result.final_loss <= 1.05 * oracle.final_loss,
            "spsa {} vs oracle {}",
            result.final_loss,
            oracle.final_loss
        );
        result.weights.as_ref().unwrap().validate().unwrap();
        assert!(result.evaluations <= 2 * opts.steps * opts.restarts + opts.restarts);
    }

    #[test]
    fn empty_candidates_rejected() {
        let (model, clips) = tiny_model(7, vec![8]);
        let x = &clips[0];
        let srs = tiny_srs(x);
        let ensemble = SurrogateEnsemble::new(vec![model]).unwrap();
        assert!(spsa_attack(&ensemble, x, "spk1", &[], &srs, &SpsaOptions::default()).is_err());
    }

    #[test]
    fn best_of_restart_prefix_is_nonincreasing() {
        let (model, clips) = tiny_model(8, vec![8]);
        let x = &clips[0];
        let srs = tiny_srs(x);
        let carriers = env_carriers(3, x.len());
        let refs: Vec<&Carrier<f64>> = carriers.iter().collect();
        let ensemble = SurrogateEnsemble::new(vec![model]).unwrap();

        // With the same seed, restarts r..=R reuse per-restart seeds, so the
        // best loss over the first r restarts is a prefix minimum.
        let mut finals = Vec::new();
        for r in 1..=4usize {
            let opts = SpsaOptions {
                steps: 40,
                restarts: r,
                seed: 11,
                ..SpsaOptions::default()
            };
            let result = spsa_attack(&ensemble, x, "spk1", &refs, &srs, &opts).unwrap();
            finals.push(result.final_loss);
        }
        for w in finals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} then {}", w[0], w[1]);
        }
    }
}
