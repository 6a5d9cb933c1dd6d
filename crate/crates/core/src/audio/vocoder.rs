//! Phase-vocoder time stretching, pitch shifting, and linear resampling.
//!
//! Pitch shift is stretch-then-resample: stretching by 2^(s/12) with the
//! vocoder keeps pitch fixed while changing duration, and resampling back to
//! the original length moves the pitch by exactly the stretch factor.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Valid public stretch-rate range.
pub const STRETCH_RATE_RANGE: (f64, f64) = (0.2, 2.0);

/// Default pitch-shift magnitude limit in semitones.
pub const DEFAULT_SHIFT_LIMIT: f64 = 25.0;

const FFT_SIZE: usize = 512;
const SYNTH_HOP: usize = 128;

/// Time-stretch by `rate` (2.0 halves the duration, 0.5 doubles it) while
/// preserving pitch. Output length is `len / rate` to within a frame.
pub fn time_stretch<S: Scalar>(clip: &AudioClip<S>, rate: f64) -> Result<AudioClip<S>> {
    if !(STRETCH_RATE_RANGE.0..=STRETCH_RATE_RANGE.1).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "stretch rate {rate} outside [{}, {}]",
            STRETCH_RATE_RANGE.0, STRETCH_RATE_RANGE.1
        )));
    }
    stretch_unchecked(clip, rate)
}

/// Shift pitch by a (possibly fractional) number of semitones, preserving
/// duration. Magnitude limited to [`DEFAULT_SHIFT_LIMIT`].
pub fn shift_pitch<S: Scalar>(clip: &AudioClip<S>, semitones: f64) -> Result<AudioClip<S>> {
    shift_pitch_with_limit(clip, semitones, DEFAULT_SHIFT_LIMIT)
}

/// [`shift_pitch`] with an explicit magnitude limit.
pub fn shift_pitch_with_limit<S: Scalar>(
    clip: &AudioClip<S>,
    semitones: f64,
    limit: f64,
) -> Result<AudioClip<S>> {
    if semitones.abs() > limit + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "pitch shift of {semitones} semitones exceeds the {limit}-semitone limit"
        )));
    }
    if semitones.abs() < 1e-9 {
        return Ok(clip.clone());
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let stretched = stretch_unchecked(clip, 1.0 / ratio)?;
    // Read the stretched signal back at the original length; the effective
    // frequency scale is stretched_len / len ~= ratio.
    Ok(AudioClip {
        samples: interpolate_to_len(&stretched.samples, clip.len()),
        sample_rate: clip.sample_rate,
    })
}

/// Linear-interpolation resample to a new sample rate.
pub fn resample<S: Scalar>(clip: &AudioClip<S>, target_rate: u32) -> Result<AudioClip<S>> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let out_len =
        ((clip.len() as f64) * target_rate as f64 / clip.sample_rate as f64).round() as usize;
    if out_len == 0 {
        return Err(Error::InvalidAudio("resample would produce no samples".into()));
    }
    Ok(AudioClip {
        samples: interpolate_to_len(&clip.samples, out_len),
        sample_rate: target_rate,
    })
}

/// Resample `input` onto `out_len` evenly spaced points with edge clamping.
fn interpolate_to_len<S: Scalar>(input: &[S], out_len: usize) -> Vec<S> {
    let step = input.len() as f64 / out_len as f64;
    (0..out_len)
        .map(|n| {
            let pos = n as f64 * step;
            let i = pos.floor() as usize;
            if i + 1 >= input.len() {
                input[input.len() - 1]
            } else {
                let frac = S::of_f64(pos - i as f64);
                input[i] + (input[i + 1] - input[i]) * frac
            }
        })
        .collect()
}

fn stretch_unchecked<S: Scalar>(clip: &AudioClip<S>, rate: f64) -> Result<AudioClip<S>> {
    if clip.len() < 32 {
        return Err(Error::InvalidAudio("clip too short to stretch".into()));
    }
    if (rate - 1.0).abs() < 1e-12 {
        return Ok(clip.clone());
    }
    let out_len = ((clip.len() as f64) / rate).round().max(1.0) as usize;
    let n_frames = out_len / SYNTH_HOP + 2;

    // Zero-pad the input so every analysis window is in range.
    let needed = ((n_frames as f64) * SYNTH_HOP as f64 * rate).ceil() as usize + FFT_SIZE + 1;
    let mut padded = clip.samples.clone();
    padded.resize(needed.max(clip.len()), S::zero());

    let window: Vec<S> = (0..FFT_SIZE)
        .map(|i| {
            S::of_f64(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / FFT_SIZE as f64).cos())
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(FFT_SIZE);
    let inv = planner.plan_fft_inverse(FFT_SIZE);

    let n_bins = FFT_SIZE / 2 + 1;
    let mut prev_phase = vec![S::zero(); n_bins];
    let mut syn_phase = vec![S::zero(); n_bins];
    let mut out = vec![S::zero(); n_frames * SYNTH_HOP + FFT_SIZE];
    let mut norm = vec![S::zero(); out.len()];
    let mut buf = vec![Complex::new(S::zero(), S::zero()); FFT_SIZE];
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut prev_pos = 0usize;

    for m in 0..n_frames {
        let pos = ((m as f64) * SYNTH_HOP as f64 * rate).round() as usize;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = Complex::new(padded[pos + i] * window[i], S::zero());
        }
        fwd.process(&mut buf);

        if m == 0 {
            for k in 0..n_bins {
                let phase = buf[k].im.atan2(buf[k].re);
                prev_phase[k] = phase;
                syn_phase[k] = phase;
            }
        } else {
            let hop_a = (pos - prev_pos) as f64;
            for k in 0..n_bins {
                let phase = buf[k].im.atan2(buf[k].re);
                let omega = two_pi * k as f64 / FFT_SIZE as f64;
                let expected = S::of_f64(omega * hop_a);
                let delta = wrap_phase((phase - prev_phase[k] - expected).as_f64());
                let true_freq = omega + delta / hop_a;
                syn_phase[k] = wrap_phase_s(
                    syn_phase[k] + S::of_f64(true_freq * SYNTH_HOP as f64),
                );
                prev_phase[k] = phase;
            }
        }
        prev_pos = pos;

        // Rebuild a conjugate-symmetric spectrum from magnitude + new phase.
        let mags: Vec<S> = buf[..n_bins].iter().map(|c| c.norm()).collect();
        for k in 0..n_bins {
            let (sin, cos) = syn_phase[k].sin_cos();
            buf[k] = Complex::new(mags[k] * cos, mags[k] * sin);
        }
        for k in 1..FFT_SIZE - n_bins + 1 {
            buf[FFT_SIZE - k] = buf[k].conj();
        }
        inv.process(&mut buf);
        let scale = S::one() / S::of_usize(FFT_SIZE);
        let base = m * SYNTH_HOP;
        for i in 0..FFT_SIZE {
            out[base + i] += buf[i].re * scale * window[i];
            norm[base + i] += window[i] * window[i];
        }
    }

    let floor = S::of_f64(1e-9);
    let samples: Vec<S> = out[..out_len]
        .iter()
        .zip(&norm)
        .map(|(&y, &w)| y / w.max(floor))
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

fn wrap_phase(p: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    p - two_pi * (p / two_pi).round()
}

fn wrap_phase_s<S: Scalar>(p: S) -> S {
    S::of_f64(wrap_phase(p.as_f64()))
}
