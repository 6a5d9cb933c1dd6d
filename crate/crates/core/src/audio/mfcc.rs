//! MFCC front-end shared by every model in the lab.
//!
//! Chain: framing, Hamming window, power spectrum, triangular mel filterbank,
//! log compression, orthonormal DCT-II. The pipeline also exposes an exact
//! gradient of the coefficients with respect to the waveform so neural models
//! can drive sample-level attacks.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Floor added to mel energies before the log.
const LOG_FLOOR: f64 = 1e-12;

/// Frame/hop/coefficient configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub coefficients: usize,
    pub mel_filters: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            coefficients: 20,
            mel_filters: 26,
        }
    }
}

/// Frames-by-coefficients feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccMatrix<S> {
    data: Vec<S>,
    frames: usize,
    coefficients: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl<S: Scalar> MfccMatrix<S> {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn coefficients(&self) -> usize {
        self.coefficients
    }

    pub fn row(&self, frame: usize) -> &[S] {
        &self.data[frame * self.coefficients..(frame + 1) * self.coefficients]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks_exact(self.coefficients)
    }

    /// Per-coefficient mean over frames.
    pub fn mean(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.coefficients];
        for row in self.rows() {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = S::one() / S::of_usize(self.frames.max(1));
        for o in &mut out {
            *o *= inv;
        }
        out
    }

    /// Mean and population standard deviation per coefficient, concatenated.
    /// This is the pooled feature vector consumed by the neural models.
    pub fn pooled_mean_std(&self) -> Vec<S> {
        let mean = self.mean();
        let mut var = vec![S::zero(); self.coefficients];
        for row in self.rows() {
            for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(row) {
                let d = x - m;
                *v += d * d;
            }
        }
        let inv = S::one() / S::of_usize(self.frames.max(1));
        let eps = S::of_f64(1e-8);
        let mut out = mean;
        out.extend(var.into_iter().map(|v| (v * inv + eps).sqrt()));
        out
    }
}

/// Precomputed window/filterbank/DCT for one (config, sample rate) pair.
#[derive(Debug, Clone)]
pub struct MfccPipeline<S> {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub coefficients: usize,
    pub mel_filters: usize,
    window: Vec<S>,
    /// `mel_filters` rows of `fft_size / 2 + 1` weights.
    filterbank: Vec<Vec<S>>,
    /// `coefficients` rows of `mel_filters` orthonormal DCT-II weights.
    dct: Vec<Vec<S>>,
    /// Triangular-filter center frequencies in Hz.
    mel_centers: Vec<f64>,
    frame_ms: f64,
    hop_ms: f64,
}

/// Per-frame intermediates kept for the backward pass.
pub struct MfccCache<S> {
    spectra: Vec<Vec<Complex<S>>>,
    mel_energies: Vec<Vec<S>>,
    n_samples: usize,
}

impl<S: Scalar> MfccPipeline<S> {
    pub fn new(cfg: &MfccConfig, sample_rate: u32) -> Result<Self> {
        if cfg.coefficients == 0 || cfg.mel_filters < cfg.coefficients {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= coefficients <= mel filters, got {} and {}",
                cfg.coefficients, cfg.mel_filters
            )));
        }
        let frame_len = (cfg.frame_ms * sample_rate as f64 / 1000.0).round() as usize;
        let hop = (cfg.hop_ms * sample_rate as f64 / 1000.0).round() as usize;
        if frame_len < 2 || hop == 0 {
            return Err(Error::InvalidArgument(
                "frame/hop too short for this sample rate".into(),
            ));
        }
        let fft_size = frame_len.next_power_of_two();
        Ok(Self {
            frame_len,
            hop,
            fft_size,
            coefficients: cfg.coefficients,
            mel_filters: cfg.mel_filters,
            window: hamming(frame_len),
            filterbank: mel_filterbank(cfg.mel_filters, fft_size, sample_rate),
            dct: dct_basis(cfg.coefficients, cfg.mel_filters),
            mel_centers: mel_center_freqs(cfg.mel_filters, sample_rate),
            frame_ms: cfg.frame_ms,
            hop_ms: cfg.hop_ms,
        })
    }

    /// Center frequency (Hz) of each mel band.
    pub fn mel_centers_hz(&self) -> &[f64] {
        &self.mel_centers
    }

    /// Map a cepstral-coefficient delta back into log-mel space (D^T delta,
    /// exact inverse direction for the orthonormal DCT).
    pub fn log_mel_from_coeff_delta(&self, delta: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.mel_filters];
        for (basis, &d) in self.dct.iter().zip(delta) {
            for (o, &b) in out.iter_mut().zip(basis) {
                *o += b * d;
            }
        }
        out
    }

    /// Number of analysis frames for a signal of `n` samples, if any.
    pub fn num_frames(&self, n: usize) -> Option<usize> {
        if n < self.frame_len {
            None
        } else {
            Some((n - self.frame_len) / self.hop + 1)
        }
    }

    pub fn compute(&self, samples: &[S]) -> Result<MfccMatrix<S>> {
        Ok(self.forward(samples, false)?.0)
    }

    /// Forward pass that also keeps the intermediates needed by `backprop`.
    pub fn forward_cached(&self, samples: &[S]) -> Result<(MfccMatrix<S>, MfccCache<S>)> {
        let (m, c) = self.forward(samples, true)?;
        Ok((m, c.expect("cache requested")))
    }

    fn forward(
        &self,
        samples: &[S],
        keep_cache: bool,
    ) -> Result<(MfccMatrix<S>, Option<MfccCache<S>>)> {
        let n_frames = self.num_frames(samples.len()).ok_or_else(|| {
            Error::InvalidAudio(format!(
                "clip of {} samples is shorter than one {}-sample frame",
                samples.len(),
                self.frame_len
            ))
        })?;

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(self.fft_size);
        let n_bins = self.fft_size / 2 + 1;
        let floor = S::of_f64(LOG_FLOOR);

        let mut data = Vec::with_capacity(n_frames * self.coefficients);
        let mut spectra = Vec::new();
        let mut mel_cache = Vec::new();
        let mut buf = vec![Complex::new(S::zero(), S::zero()); self.fft_size];
        let mut power = vec![S::zero(); n_bins];

        for f in 0..n_frames {
            let start = f * self.hop;
            for (i, c) in buf.iter_mut().enumerate() {
                let v = if i < self.frame_len {
                    samples[start + i] * self.window[i]
                } else {
                    S::zero()
                };
                *c = Complex::new(v, S::zero());
            }
            fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(buf.iter().take(n_bins)) {
                *p = c.re * c.re + c.im * c.im;
            }

            let mel: Vec<S> = self
                .filterbank
                .iter()
                .map(|row| row.iter().zip(&power).map(|(&w, &p)| w * p).sum())
                .collect();
            let log_mel: Vec<S> = mel.iter().map(|&m| (m + floor).ln()).collect();
            for basis in &self.dct {
                data.push(basis.iter().zip(&log_mel).map(|(&d, &l)| d * l).sum());
            }

            if keep_cache {
                spectra.push(buf.clone());
                mel_cache.push(mel);
            }
        }

        let matrix = MfccMatrix {
            data,
            frames: n_frames,
            coefficients: self.coefficients,
            frame_ms: self.frame_ms,
            hop_ms: self.hop_ms,
        };
        let cache = keep_cache.then(|| MfccCache {
            spectra,
            mel_energies: mel_cache,
            n_samples: samples.len(),
        });
        Ok((matrix, cache))
    }

    /// Gradient of a scalar loss with respect to the waveform, given the loss
    /// gradient with respect to every MFCC cell (frames x coefficients,
    /// row-major).
    pub fn backprop(&self, cache: &MfccCache<S>, d_mfcc: &[S]) -> Vec<S> {
        let n_bins = self.fft_size / 2 + 1;
        let floor = S::of_f64(LOG_FLOOR);
        let n_frames = cache.spectra.len();
        assert_eq!(d_mfcc.len(), n_frames * self.coefficients);

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(self.fft_size);
        let mut grad = vec![S::zero(); cache.n_samples];
        let mut q = vec![Complex::new(S::zero(), S::zero()); self.fft_size];
        let two = S::of_f64(2.0);

        for f in 0..n_frames {
            let dc = &d_mfcc[f * self.coefficients..(f + 1) * self.coefficients];

            // DCT^T then the log derivative.
            let mut d_mel = vec![S::zero(); self.mel_filters];
            for (basis, &g) in self.dct.iter().zip(dc) {
                for (dm, &b) in d_mel.iter_mut().zip(basis) {
                    *dm += b * g;
                }
            }
            for (dm, &m) in d_mel.iter_mut().zip(&cache.mel_energies[f]) {
                *dm /= m + floor;
            }

            // Filterbank^T into power-spectrum space.
            let mut d_power = vec![S::zero(); n_bins];
            for (row, &dm) in self.filterbank.iter().zip(&d_mel) {
                for (dp, &w) in d_power.iter_mut().zip(row) {
                    *dp += w * dm;
                }
            }

            // d/dx of sum_k dP_k |X_k|^2 = 2 w_n Re(DFT(dP .* conj(X)))_n.
            let spectrum = &cache.spectra[f];
            for (i, slot) in q.iter_mut().enumerate() {
                *slot = if i < n_bins {
                    spectrum[i].conj() * d_power[i]
                } else {
                    Complex::new(S::zero(), S::zero())
                };
            }
            fft.process(&mut q);
            let start = f * self.hop;
            for n in 0..self.frame_len {
                grad[start + n] += two * self.window[n] * q[n].re;
            }
        }
        grad
    }
}

/// Convenience wrapper over [`MfccPipeline::compute`].
pub fn mfcc<S: Scalar>(clip: &AudioClip<S>, cfg: &MfccConfig) -> Result<MfccMatrix<S>> {
    MfccPipeline::new(cfg, clip.sample_rate)?.compute(&clip.samples)
}

fn hamming<S: Scalar>(len: usize) -> Vec<S> {
    let denom = (len - 1) as f64;
    (0..len)
        .map(|i| S::of_f64(0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos()))
        .collect()
}

/// HTK-style mel scale.
fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn mel_center_freqs(n_filters: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (1..=n_filters)
        .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
        .collect()
}

/// Triangular filters over the one-sided spectrum, rows of n_fft/2+1 weights.
fn mel_filterbank<S: Scalar>(n_filters: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<S>> {
    let n_bins = n_fft / 2 + 1;
    let f_max = sample_rate as f64 / 2.0;
    let mel_points: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(hz_to_mel(f_max) * i as f64 / (n_filters + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;

    (0..n_filters)
        .map(|j| {
            let (lo, mid, hi) = (mel_points[j], mel_points[j + 1], mel_points[j + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    };
                    S::of_f64(w)
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis: `n_out` rows over `n_in` inputs.
fn dct_basis<S: Scalar>(n_out: usize, n_in: usize) -> Vec<Vec<S>> {
    let n = n_in as f64;
    (0..n_out)
        .map(|i| {
            let norm = if i == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..n_in)
                .map(|j| {
                    S::of_f64(
                        norm * (std::f64::consts::PI * i as f64 * (j as f64 + 0.5) / n).cos(),
                    )
                })
                .collect()
        })
        .collect()
}
