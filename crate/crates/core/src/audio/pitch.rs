//! Autocorrelation pitch tracking and semitone distances.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Search band and framing for the pitch tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub min_hz: f64,
    pub max_hz: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Normalized-autocorrelation floor below which a frame is unvoiced.
    pub voicing_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            min_hz: 50.0,
            max_hz: 500.0,
            frame_ms: 40.0,
            hop_ms: 10.0,
            voicing_threshold: 0.3,
        }
    }
}

/// Per-frame fundamental frequency; `None` marks unvoiced frames.
/// `clarity` keeps the normalized autocorrelation at the chosen lag and feeds
/// the harmonicity (HNR) measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack<S> {
    pub f0: Vec<Option<S>>,
    pub clarity: Vec<S>,
    pub hop_ms: f64,
}

impl<S: Scalar> PitchTrack<S> {
    pub fn voiced_count(&self) -> usize {
        self.f0.iter().flatten().count()
    }

    /// Mean f0 over voiced frames, if any exist.
    pub fn mean_f0(&self) -> Option<S> {
        let voiced: Vec<S> = self.f0.iter().flatten().copied().collect();
        if voiced.is_empty() {
            None
        } else {
            Some(voiced.iter().copied().sum::<S>() / S::of_usize(voiced.len()))
        }
    }

    /// RMS per-frame deviation in semitones against another track, over the
    /// frames voiced in both. Zero when no frame is voiced in both.
    pub fn rms_semitone_deviation(&self, other: &Self) -> S {
        let mut acc = S::zero();
        let mut n = 0usize;
        for (a, b) in self.f0.iter().zip(&other.f0) {
            if let (Some(fa), Some(fb)) = (a, b) {
                let d = semitone_interval(*fa, *fb);
                acc += d * d;
                n += 1;
            }
        }
        if n == 0 {
            S::zero()
        } else {
            (acc / S::of_usize(n)).sqrt()
        }
    }
}

/// Signed semitone interval between two frequencies: 12*log2(to/from).
pub fn semitone_interval<S: Scalar>(from: S, to: S) -> S {
    S::of_f64(12.0) * (to / from).log2()
}

/// Track f0 with normalized autocorrelation, parabolic peak refinement, and
/// smallest-strong-peak selection to dodge octave-down errors.
pub fn estimate_pitch<S: Scalar>(clip: &AudioClip<S>, cfg: &PitchConfig) -> Result<PitchTrack<S>> {
    if cfg.min_hz <= 0.0 || cfg.max_hz <= cfg.min_hz {
        return Err(Error::InvalidArgument("bad pitch search band".into()));
    }
    let sr = clip.sample_rate as f64;
    let frame_len = (cfg.frame_ms * sr / 1000.0).round() as usize;
    let hop = (cfg.hop_ms * sr / 1000.0).round() as usize;
    if clip.len() < frame_len {
        return Err(Error::InvalidAudio(format!(
            "clip of {} samples is shorter than one {frame_len}-sample pitch frame",
            clip.len()
        )));
    }
    let lag_min = (sr / cfg.max_hz).floor() as usize;
    let lag_max = ((sr / cfg.min_hz).ceil() as usize).min(frame_len - 2);
    if lag_min < 2 || lag_min >= lag_max {
        return Err(Error::InvalidArgument(
            "pitch band unresolvable at this sample rate/frame".into(),
        ));
    }

    let n_frames = (clip.len() - frame_len) / hop + 1;
    let fft_size = (2 * frame_len).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(fft_size);
    let inv = planner.plan_fft_inverse(fft_size);

    let mut f0 = Vec::with_capacity(n_frames);
    let mut clarity = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(S::zero(), S::zero()); fft_size];
    let threshold = S::of_f64(cfg.voicing_threshold);

    for f in 0..n_frames {
        let frame = &clip.samples[f * hop..f * hop + frame_len];
        let mean = frame.iter().copied().sum::<S>() / S::of_usize(frame_len);
        let centered: Vec<S> = frame.iter().map(|&x| x - mean).collect();
        let energy: S = centered.iter().map(|&x| x * x).sum();
        if energy.as_f64() < 1e-10 {
            f0.push(None);
            clarity.push(S::zero());
            continue;
        }

        // Raw autocorrelation via FFT.
        for (i, c) in buf.iter_mut().enumerate() {
            let v = if i < frame_len { centered[i] } else { S::zero() };
            *c = Complex::new(v, S::zero());
        }
        fwd.process(&mut buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), S::zero());
        }
        inv.process(&mut buf);
        let scale = S::one() / S::of_usize(fft_size);

        // Normalize each lag by the energies of the two overlapping segments.
        let mut prefix = Vec::with_capacity(frame_len + 1);
        prefix.push(S::zero());
        for &x in &centered {
            let last = *prefix.last().unwrap();
            prefix.push(last + x * x);
        }
        let seg = |a: usize, b: usize| prefix[b] - prefix[a]; // sum of squares over [a, b)
        let tiny = S::of_f64(1e-30);
        let norm: Vec<S> = (0..=lag_max + 1)
            .map(|lag| {
                let raw = buf[lag].re * scale;
                let denom = (seg(0, frame_len - lag) * seg(lag, frame_len)).sqrt() + tiny;
                raw / denom
            })
            .collect();

        let best = (lag_min..=lag_max)
            .map(|l| (l, norm[l]))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if best.1 < threshold {
            f0.push(None);
            clarity.push(best.1.max(S::zero()));
            continue;
        }

        // Among local peaks nearly as strong as the global one, take the
        // smallest lag (highest f0) to avoid halving the pitch.
        let accept = best.1 * S::of_f64(0.9);
        let mut lag = best.0;
        for l in lag_min..=lag_max {
            if norm[l] >= accept && norm[l] >= norm[l - 1] && norm[l] >= norm[l + 1] {
                lag = l;
                break;
            }
        }

        let refined = parabolic_refine(&norm, lag, lag_min, lag_max);
        let hz = (sr / refined).clamp(cfg.min_hz, cfg.max_hz);
        f0.push(Some(S::of_f64(hz)));
        clarity.push(norm[lag].min(S::one()));
    }

    Ok(PitchTrack {
        f0,
        clarity,
        hop_ms: cfg.hop_ms,
    })
}

fn parabolic_refine<S: Scalar>(norm: &[S], lag: usize, lag_min: usize, lag_max: usize) -> f64 {
    if lag <= lag_min || lag >= lag_max {
        return lag as f64;
    }
    let (a, b, c) = (
        norm[lag - 1].as_f64(),
        norm[lag].as_f64(),
        norm[lag + 1].as_f64(),
    );
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-30 {
        return lag as f64;
    }
    let delta = (0.5 * (a - c) / denom).clamp(-1.0, 1.0);
    lag as f64 + delta
}

/// Average pitch distance in semitones between the voiced means of two
/// tracks: |12*log2(mean_a / mean_b)|. Symmetric and nonnegative.
pub fn pitch_distance<S: Scalar>(a: &PitchTrack<S>, b: &PitchTrack<S>) -> Result<S> {
    let ma = a
        .mean_f0()
        .ok_or_else(|| Error::InvalidAudio("first track has no voiced frames".into()))?;
    let mb = b
        .mean_f0()
        .ok_or_else(|| Error::InvalidAudio("second track has no voiced frames".into()))?;
    // Evaluate on the ordered pair so symmetry is exact in floating point.
    Ok(semitone_interval(ma.min(mb), ma.max(mb)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64, sr: u32) -> AudioClip<f64> {
        let n = (secs * sr as f64) as usize;
        AudioClip::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
                .collect(),
            sr,
        )
        .unwrap()
    }

    fn track(freq: f64) -> PitchTrack<f64> {
        estimate_pitch(&tone(freq, 0.5, 16_000), &PitchConfig::default()).unwrap()
    }

    #[test]
    fn pure_tone_within_two_percent() {
        for freq in [120.0, 220.0, 330.0, 440.0] {
            let t = track(freq);
            assert!(t.voiced_count() > 0);
            for f in t.f0.iter().flatten() {
                assert!((f - freq).abs() / freq < 0.02, "{f} vs {freq}");
            }
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let clip = AudioClip::new(vec![0.0f64; 16_000], 16_000).unwrap();
        let t = estimate_pitch(&clip, &PitchConfig::default()).unwrap();
        assert_eq!(t.voiced_count(), 0);
    }

    #[test]
    fn octave_distance_is_twelve() {
        let a = track(440.0);
        let b = track(220.0);
        let d = pitch_distance(&a, &b).unwrap();
        assert!((d - 12.0).abs() < 0.35, "distance {d}");
        // Symmetry is exact.
        assert_eq!(d, pitch_distance(&b, &a).unwrap());
    }

    #[test]
    fn semitone_formula_exact_values() {
        assert_eq!(semitone_interval(440.0f64, 880.0), 12.0);
        assert_eq!(semitone_interval(440.0f64, 440.0), 0.0);
        let one = semitone_interval(440.0f64, 466.16);
        assert!((one - 1.0).abs() < 0.01, "{one}");
    }

    #[test]
    fn log_identity_for_chained_distances() {
        // d(a, c) relation: signed intervals add exactly in log space.
        let (a, b, c) = (200.0f64, 280.0, 410.0);
        let total = semitone_interval(a, b) + semitone_interval(b, c);
        assert!((total - semitone_interval(a, c)).abs() < 1e-12);
    }

    #[test]
    fn unvoiced_track_errors_in_distance() {
        let silent = estimate_pitch(
            &AudioClip::new(vec![0.0f64; 16_000], 16_000).unwrap(),
            &PitchConfig::default(),
        )
        .unwrap();
        assert!(pitch_distance(&silent, &track(220.0)).is_err());
    }
}
