//! Threshold calibration at the equal-error point plus FAR/FRR/OSIER
//! reporting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport<S> {
    pub threshold: S,
    pub far: S,
    pub frr: S,
    pub eer: S,
}

/// Fraction of imposter scores accepted (>= threshold).
pub fn far_at<S: Scalar>(imposter: &[S], threshold: S) -> S {
    let hits = imposter.iter().filter(|&&s| s >= threshold).count();
    S::of_usize(hits) / S::of_usize(imposter.len().max(1))
}

/// Fraction of genuine scores rejected (< threshold).
pub fn frr_at<S: Scalar>(genuine: &[S], threshold: S) -> S {
    let misses = genuine.iter().filter(|&&s| s < threshold).count();
    S::of_usize(misses) / S::of_usize(genuine.len().max(1))
}

/// Pick the threshold at the FAR/FRR crossing (linear interpolation between
/// candidate thresholds) and report the rates there.
pub fn calibrate_from_scores<S: Scalar>(
    genuine: &[S],
    imposter: &[S],
) -> Result<CalibrationReport<S>> {
    if genuine.is_empty() || imposter.is_empty() {
        return Err(Error::InsufficientData(
            "calibration needs both genuine and imposter scores".into(),
        ));
    }
    let mut candidates: Vec<S> = genuine.iter().chain(imposter).copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    candidates.dedup();

    // Below the lowest score FAR = 1, FRR = 0; above the highest FAR = 0,
    // FRR = 1. Walk until the curves cross, then interpolate.
    let span = (*candidates.last().unwrap() - candidates[0]).max(S::of_f64(1e-12));
    let eps = span * S::of_f64(1e-9);
    let mut prev_t = candidates[0] - span * S::of_f64(0.01);
    let mut prev_far = far_at(imposter, prev_t);
    let mut prev_frr = frr_at(genuine, prev_t);

    let mut last = candidates.last().copied().unwrap() + eps;
    let walk: Vec<S> = candidates.iter().copied().chain(std::iter::once(last)).collect();
    for &t in &walk {
        let far = far_at(imposter, t);
        let frr = frr_at(genuine, t);
        if frr >= far {
            // Crossing happened in (prev_t, t]; interpolate on the gap.
            let d_prev = prev_far - prev_frr; // >= 0
            let d_now = frr - far; // >= 0
            let denom = d_prev + d_now;
            let alpha = if denom > S::zero() { d_prev / denom } else { S::of_f64(0.5) };
            let threshold = prev_t + (t - prev_t) * alpha;
            let far_c = far_at(imposter, threshold);
            let frr_c = frr_at(genuine, threshold);
            let two = S::of_f64(2.0);
            // EER estimate: interpolated crossing height.
            let eer = (prev_far + prev_frr) / two * (S::one() - alpha)
                + (far + frr) / two * alpha;
            return Ok(CalibrationReport {
                threshold,
                far: far_c,
                frr: frr_c,
                eer,
            });
        }
        prev_t = t;
        prev_far = far;
        prev_frr = frr;
    }
    last = *candidates.last().unwrap();
    Ok(CalibrationReport {
        threshold: last,
        far: far_at(imposter, last),
        frr: frr_at(genuine, last),
        eer: (far_at(imposter, last) + frr_at(genuine, last)) / S::of_f64(2.0),
    })
}

/// Open-set trials: per-trial max score plus whether the argmax hit the true
/// label (genuine trials only).
#[derive(Debug, Clone, Copy)]
pub struct OsiTrial<S> {
    pub max_score: S,
    pub correct_label: bool,
}

/// Open-set identification error rate: the equal point of OSI false
/// acceptance (imposter max >= theta) and OSI false rejection (genuine
/// rejected or misidentified).
pub fn osier<S: Scalar>(genuine: &[OsiTrial<S>], imposter_max: &[S]) -> Result<S> {
    if genuine.is_empty() || imposter_max.is_empty() {
        return Err(Error::InsufficientData(
            "OSIER needs both genuine and imposter trials".into(),
        ));
    }
    let mut candidates: Vec<S> = genuine
        .iter()
        .map(|t| t.max_score)
        .chain(imposter_max.iter().copied())
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    candidates.dedup();

    let fr = |theta: S| -> S {
        let bad = genuine
            .iter()
            .filter(|t| t.max_score < theta || !t.correct_label)
            .count();
        S::of_usize(bad) / S::of_usize(genuine.len())
    };
    let fa = |theta: S| -> S { far_at(imposter_max, theta) };

    let mut best = (S::infinity(), S::zero());
    for &t in &candidates {
        let gap = (fa(t) - fr(t)).abs();
        if gap < best.0 {
            best = (gap, (fa(t) + fr(t)) / S::of_f64(2.0));
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_separated_gives_zero_rates() {
        let genuine = vec![0.8f64, 0.9, 0.95, 0.85];
        let imposter = vec![0.1f64, 0.2, 0.15, 0.05];
        let r = calibrate_from_scores(&genuine, &imposter).unwrap();
        assert_eq!(r.far, 0.0);
        assert_eq!(r.frr, 0.0);
        assert!(r.eer.abs() < 1e-9);
        assert!(r.threshold > 0.2 && r.threshold <= 0.8);
    }

    #[test]
    fn identical_distributions_give_chance_eer() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let genuine: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..1.0)).collect();
        let imposter: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..1.0)).collect();
        let r = calibrate_from_scores(&genuine, &imposter).unwrap();
        assert!((r.eer - 0.5).abs() < 0.06, "EER {}", r.eer);
    }

    #[test]
    fn far_is_a_count_ratio() {
        let imposter: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        // 7 scores >= 0.93: {0.93 .. 0.99}
        let far = far_at(&imposter, 0.93);
        assert!((far - 0.07).abs() < 1e-12);
    }

    #[test]
    fn missing_class_errors() {
        assert!(calibrate_from_scores::<f64>(&[], &[0.1]).is_err());
        assert!(calibrate_from_scores::<f64>(&[0.1], &[]).is_err());
    }

    #[test]
    fn raising_threshold_never_flips_reject_to_accept() {
        // SV monotonicity: accept iff s >= theta.
        let score = 0.6f64;
        let mut last_accept = true;
        for i in 0..100 {
            let theta = i as f64 / 100.0;
            let accept = score >= theta;
            if !last_accept {
                assert!(!accept);
            }
            last_accept = accept;
        }
    }

    #[test]
    fn osier_zero_when_separated_and_correct() {
        let genuine: Vec<OsiTrial<f64>> = (0..10)
            .map(|i| OsiTrial {
                max_score: 0.8 + (i as f64) * 0.01,
                correct_label: true,
            })
            .collect();
        let imposter: Vec<f64> = (0..10).map(|i| 0.1 + (i as f64) * 0.01).collect();
        assert!(osier(&genuine, &imposter).unwrap() < 1e-9);
    }
}
