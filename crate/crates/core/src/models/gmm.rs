//! Diagonal-covariance GMM universal background model, EM training, and MAP
//! mean adaptation for speaker enrollment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute variance floor applied in every M step.
pub const VAR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGmm<S> {
    pub weights: Vec<S>,
    pub means: Vec<Vec<S>>,
    pub vars: Vec<Vec<S>>,
}

impl<S: Scalar> DiagGmm<S> {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Per-component log densities plus the total log-likelihood of `x`.
    fn component_log_densities(&self, x: &[S]) -> (Vec<S>, S) {
        let half = S::of_f64(0.5);
        let log_two_pi = S::of_f64((2.0 * std::f64::consts::PI).ln());
        let logs: Vec<S> = self
            .weights
            .iter()
            .zip(self.means.iter().zip(&self.vars))
            .map(|(&w, (mean, var))| {
                let mut acc = S::zero();
                for ((&xi, &mi), &vi) in x.iter().zip(mean).zip(var) {
                    let d = xi - mi;
                    acc += d * d / vi + vi.ln() + log_two_pi;
                }
                w.ln() - half * acc
            })
            .collect();
        let total = log_sum_exp(&logs);
        (logs, total)
    }

    pub fn log_likelihood(&self, x: &[S]) -> S {
        self.component_log_densities(x).1
    }

    /// Mean per-frame log-likelihood over a frame set.
    pub fn mean_log_likelihood(&self, frames: &[Vec<S>]) -> S {
        let sum: S = frames.iter().map(|f| self.log_likelihood(f)).sum();
        sum / S::of_usize(frames.len().max(1))
    }
}

fn log_sum_exp<S: Scalar>(values: &[S]) -> S {
    let max = values
        .iter()
        .fold(S::neg_infinity(), |a, &b| a.max(b));
    if !max.is_finite() {
        return max;
    }
    let sum: S = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UbmTrainOptions {
    pub components: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for UbmTrainOptions {
    fn default() -> Self {
        Self {
            components: 32,
            iterations: 20,
            seed: 0,
        }
    }
}

/// EM-train a diagonal-covariance UBM on pooled frames. Returns the model and
/// the per-iteration mean log-likelihood trace (nondecreasing).
pub fn train_ubm<S: Scalar>(
    frames: &[Vec<S>],
    opts: &UbmTrainOptions,
) -> Result<(DiagGmm<S>, Vec<S>)> {
    if frames.is_empty() {
        return Err(Error::InsufficientData("no training frames".into()));
    }
    let dim = frames[0].len();
    let needed = 10 * opts.components * dim;
    if frames.len() < needed {
        return Err(Error::InsufficientData(format!(
            "need at least {needed} frames for {} components x {dim} dims, got {}",
            opts.components,
            frames.len()
        )));
    }

    let n = frames.len();
    let k = opts.components;
    let floor = S::of_f64(VAR_FLOOR);

    // Global variance for initialization.
    let mut global_mean = vec![S::zero(); dim];
    for f in frames {
        for (m, &x) in global_mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    for m in &mut global_mean {
        *m /= S::of_usize(n);
    }
    let mut global_var = vec![S::zero(); dim];
    for f in frames {
        for ((v, &x), &m) in global_var.iter_mut().zip(f).zip(&global_mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    for v in &mut global_var {
        *v = (*v / S::of_usize(n)).max(floor);
    }

    // k-means++ seeding plus a few Lloyd iterations keeps EM out of
    // collapsed starts.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let means = kmeans_init(frames, k, &mut rng);
    let mut gmm = DiagGmm {
        weights: vec![S::one() / S::of_usize(k); k],
        means,
        vars: vec![global_var.clone(); k],
    };

    let mut trace = Vec::with_capacity(opts.iterations);
    let mut resp = vec![vec![S::zero(); k]; n];

    for _ in 0..opts.iterations {
        // E step; the frame likelihood under current parameters is free here.
        let mut total_ll = S::zero();
        for (i, frame) in frames.iter().enumerate() {
            let (logs, total) = gmm.component_log_densities(frame);
            total_ll += total;
            for (r, &l) in resp[i].iter_mut().zip(&logs) {
                *r = (l - total).exp();
            }
        }
        trace.push(total_ll / S::of_usize(n));

        // M step with component-dropout protection.
        for c in 0..k {
            let nk: S = resp.iter().map(|r| r[c]).sum();
            if nk.as_f64() < 1e-8 {
                continue; // starved component keeps its parameters
            }
            let mut mean = vec![S::zero(); dim];
            for (r, frame) in resp.iter().zip(frames) {
                for (m, &x) in mean.iter_mut().zip(frame) {
                    *m += r[c] * x;
                }
            }
            for m in &mut mean {
                *m /= nk;
            }
            let mut var = vec![S::zero(); dim];
            for (r, frame) in resp.iter().zip(frames) {
                for ((v, &x), &m) in var.iter_mut().zip(frame).zip(&mean) {
                    let d = x - m;
                    *v += r[c] * d * d;
                }
            }
            for v in &mut var {
                *v = (*v / nk).max(floor);
            }
            gmm.weights[c] = nk / S::of_usize(n);
            gmm.means[c] = mean;
            gmm.vars[c] = var;
        }
        // Renormalize weights in case a component was skipped.
        let wsum: S = gmm.weights.iter().copied().sum();
        for w in &mut gmm.weights {
            *w /= wsum;
        }
    }

    Ok((gmm, trace))
}

fn kmeans_init<S: Scalar>(frames: &[Vec<S>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<S>> {
    let n = frames.len();
    let dist2 = |a: &[S], b: &[S]| -> S {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<S>()
    };

    let mut centers: Vec<Vec<S>> = vec![frames[rng.gen_range(0..n)].clone()];
    let mut best: Vec<S> = frames.iter().map(|f| dist2(f, &centers[0])).collect();
    while centers.len() < k {
        let total: S = best.iter().copied().sum();
        let pick = if total <= S::zero() {
            rng.gen_range(0..n)
        } else {
            let mut r = S::of_f64(rng.gen_range(0.0..1.0)) * total;
            let mut idx = n - 1;
            for (i, &d) in best.iter().enumerate() {
                if r <= d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        };
        let center = frames[pick].clone();
        for (b, f) in best.iter_mut().zip(frames) {
            *b = (*b).min(dist2(f, &center));
        }
        centers.push(center);
    }

    // Lloyd refinement.
    let dim = frames[0].len();
    for _ in 0..5 {
        let mut sums = vec![vec![S::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for f in frames {
            let mut c_best = 0;
            let mut d_best = S::infinity();
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(f, center);
                if d < d_best {
                    d_best = d;
                    c_best = c;
                }
            }
            counts[c_best] += 1;
            for (s, &x) in sums[c_best].iter_mut().zip(f) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (m, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *m = *s / S::of_usize(counts[c]);
                }
            }
        }
    }
    centers
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MapOptions {
    pub relevance: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { relevance: 16.0 }
    }
}

/// MAP mean adaptation: blend data means into the UBM means with relevance
/// factor r (weights and variances are carried over unchanged).
pub fn map_adapt<S: Scalar>(
    ubm: &DiagGmm<S>,
    frames: &[Vec<S>],
    opts: &MapOptions,
) -> Result<DiagGmm<S>> {
    if frames.is_empty() {
        return Err(Error::InsufficientData("no adaptation frames".into()));
    }
    let k = ubm.components();
    let dim = ubm.dim();
    let mut nk = vec![S::zero(); k];
    let mut acc = vec![vec![S::zero(); dim]; k];
    for frame in frames {
        let (logs, total) = ubm.component_log_densities(frame);
        for c in 0..k {
            let r = (logs[c] - total).exp();
            nk[c] += r;
            for (a, &x) in acc[c].iter_mut().zip(frame) {
                *a += r * x;
            }
        }
    }
    let relevance = S::of_f64(opts.relevance);
    let mut adapted = ubm.clone();
    for c in 0..k {
        if nk[c].as_f64() <= 0.0 {
            continue;
        }
        let alpha = nk[c] / (nk[c] + relevance);
        for (m, (&a, &u)) in adapted.means[c]
            .iter_mut()
            .zip(acc[c].iter().zip(&ubm.means[c]))
        {
            let data_mean = a / nk[c];
            *m = alpha * data_mean + (S::one() - alpha) * u;
        }
    }
    Ok(adapted)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-D frames from a known two-component mixture at +-3, sigma 0.5.
    fn two_blob_frames(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let center = if rng.gen_bool(0.5) { 3.0 } else { -3.0 };
                vec![center + 0.5 * rng.sample::<f64, _>(rand_distr::StandardNormal)]
            })
            .collect()
    }

    #[test]
    fn recovers_two_component_means() {
        let frames = two_blob_frames(400, 3);
        let opts = UbmTrainOptions {
            components: 2,
            iterations: 30,
            seed: 3,
        };
        let (gmm, _) = train_ubm(&frames, &opts).unwrap();
        let mut means: Vec<f64> = gmm.means.iter().map(|m| m[0]).collect();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((means[0] + 3.0).abs() < 0.1, "low mean {}", means[0]);
        assert!((means[1] - 3.0).abs() < 0.1, "high mean {}", means[1]);
    }

    #[test]
    fn single_component_matches_sample_statistics() {
        let frames = two_blob_frames(200, 5);
        let opts = UbmTrainOptions {
            components: 1,
            iterations: 5,
            seed: 0,
        };
        let (gmm, _) = train_ubm(&frames, &opts).unwrap();
        let n = frames.len() as f64;
        let mean: f64 = frames.iter().map(|f| f[0]).sum::<f64>() / n;
        let var: f64 = frames.iter().map(|f| (f[0] - mean).powi(2)).sum::<f64>() / n;
        assert!((gmm.means[0][0] - mean).abs() < 1e-6);
        assert!((gmm.vars[0][0] - var).abs() < 1e-6);
        assert!((gmm.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn em_log_likelihood_is_monotone() {
        for seed in 0..10u64 {
            let frames = two_blob_frames(300, seed);
            let opts = UbmTrainOptions {
                components: 4,
                iterations: 20,
                seed,
            };
            let (_, trace) = train_ubm(&frames, &opts).unwrap();
            assert_eq!(trace.len(), 20);
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "drop: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn insufficient_frames_rejected() {
        let frames = two_blob_frames(15, 1);
        let opts = UbmTrainOptions {
            components: 2,
            iterations: 5,
            seed: 0,
        };
        assert!(train_ubm(&frames, &opts).is_err());
    }

    #[test]
    fn self_adaptation_stays_near_ubm() {
        let frames = two_blob_frames(400, 9);
        let opts = UbmTrainOptions {
            components: 2,
            iterations: 25,
            seed: 9,
        };
        let (ubm, _) = train_ubm(&frames, &opts).unwrap();
        let adapted = map_adapt(&ubm, &frames, &MapOptions::default()).unwrap();
        for (a, u) in adapted.means.iter().zip(&ubm.means) {
            assert!((a[0] - u[0]).abs() < 0.05, "{} vs {}", a[0], u[0]);
        }
    }

    #[test]
    fn huge_relevance_freezes_ubm() {
        let frames = two_blob_frames(200, 11);
        let opts = UbmTrainOptions {
            components: 2,
            iterations: 10,
            seed: 11,
        };
        let (ubm, _) = train_ubm(&frames, &opts).unwrap();
        let shifted: Vec<Vec<f64>> = frames.iter().map(|f| vec![f[0] + 2.0]).collect();
        let adapted = map_adapt(&ubm, &shifted, &MapOptions { relevance: 1e12 }).unwrap();
        for (a, u) in adapted.means.iter().zip(&ubm.means) {
            assert!((a[0] - u[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn map_shift_follows_occupancy_formula() {
        // Single component, data shifted +1: adapted shift = n / (n + r).
        let frames = two_blob_frames(300, 13);
        let opts = UbmTrainOptions {
            components: 1,
            iterations: 5,
            seed: 0,
        };
        let (ubm, _) = train_ubm(&frames, &opts).unwrap();
        let shifted: Vec<Vec<f64>> = frames.iter().map(|f| vec![f[0] + 1.0]).collect();
        let adapted = map_adapt(&ubm, &shifted, &MapOptions { relevance: 16.0 }).unwrap();
        let n = shifted.len() as f64;
        let expected = n / (n + 16.0);
        // Data mean itself sits 1.0 above the UBM mean.
        let shift = adapted.means[0][0] - ubm.means[0][0];
        assert!((shift - expected).abs() < 1e-6, "shift {shift} vs {expected}");
    }

    #[test]
    fn empty_adaptation_errors() {
        let frames = two_blob_frames(200, 17);
        let opts = UbmTrainOptions {
            components: 1,
            iterations: 3,
            seed: 0,
        };
        let (ubm, _) = train_ubm(&frames, &opts).unwrap();
        assert!(map_adapt(&ubm, &[], &MapOptions::default()).is_err());
    }
}
