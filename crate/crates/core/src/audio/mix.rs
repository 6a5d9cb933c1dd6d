//! Signal-to-carrier-ratio mixing and waveform quality measures.

use serde::{Deserialize, Serialize};

use super::pitch::{estimate_pitch, PitchConfig};
use super::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Signal-to-carrier ratio in dB: 10*log10(E(signal) / E(scaled carrier)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrLevel<S>(pub S);

impl<S: Scalar> ScrLevel<S> {
    pub fn db(self) -> S {
        self.0
    }
}

/// Mix `carrier` into `signal` at an exact SCR. The carrier is tiled or
/// truncated to the signal length before its gain is solved.
pub fn mix_at_scr<S: Scalar>(
    signal: &AudioClip<S>,
    carrier: &AudioClip<S>,
    scr: ScrLevel<S>,
) -> Result<AudioClip<S>> {
    if signal.sample_rate != carrier.sample_rate {
        return Err(Error::InvalidAudio(format!(
            "sample-rate mismatch: {} vs {}",
            signal.sample_rate, carrier.sample_rate
        )));
    }
    if !scr.0.is_finite() {
        return Err(Error::InvalidArgument("SCR must be finite".into()));
    }
    let aligned = carrier.tiled_to(signal.len());
    let e_signal = signal.energy();
    let e_carrier = aligned.energy();
    if e_signal <= S::zero() {
        return Err(Error::InvalidAudio("zero-energy signal".into()));
    }
    if e_carrier <= S::zero() {
        return Err(Error::InvalidAudio("zero-energy carrier".into()));
    }
    let ten = S::of_f64(10.0);
    let gain = (e_signal / (e_carrier * ten.powf(scr.0 / ten))).sqrt();
    signal.add_scaled(&aligned, gain)
}

/// SCR implied by an (original, perturbed) pair; `None` when the difference
/// or the original carries no energy.
pub fn scr_between<S: Scalar>(original: &AudioClip<S>, perturbed: &AudioClip<S>) -> Option<S> {
    let e_orig = original.energy();
    let e_diff: S = original
        .samples
        .iter()
        .zip(&perturbed.samples)
        .map(|(&a, &b)| (b - a) * (b - a))
        .sum();
    if e_orig <= S::zero() || e_diff <= S::zero() {
        None
    } else {
        Some(S::of_f64(10.0) * (e_orig / e_diff).log10())
    }
}

/// Distance/quality record for an (original, perturbed) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics<S> {
    pub l2: S,
    pub linf: S,
    /// `None` when the pair is identical (infinite SCR).
    pub scr_db: Option<S>,
    /// Harmonicity of the perturbed clip; `None` when nothing is voiced.
    pub hnr_db: Option<S>,
}

/// L2/Linf/SCR on the difference plus autocorrelation harmonicity (HNR) of
/// the perturbed clip.
pub fn quality_metrics<S: Scalar>(
    original: &AudioClip<S>,
    perturbed: &AudioClip<S>,
) -> Result<QualityMetrics<S>> {
    if original.len() != perturbed.len() {
        return Err(Error::InvalidAudio(format!(
            "length mismatch: {} vs {}",
            original.len(),
            perturbed.len()
        )));
    }
    if original.sample_rate != perturbed.sample_rate {
        return Err(Error::InvalidAudio("sample-rate mismatch".into()));
    }
    let mut l2sq = S::zero();
    let mut linf = S::zero();
    for (&a, &b) in original.samples.iter().zip(&perturbed.samples) {
        let d = b - a;
        l2sq += d * d;
        linf = linf.max(d.abs());
    }
    Ok(QualityMetrics {
        l2: l2sq.sqrt(),
        linf,
        scr_db: scr_between(original, perturbed),
        hnr_db: hnr(perturbed),
    })
}

/// Mean harmonics-to-noise ratio over voiced frames:
/// 10*log10(r / (1 - r)) at the per-frame pitch lag.
pub fn hnr<S: Scalar>(clip: &AudioClip<S>) -> Option<S> {
    let track = estimate_pitch(clip, &PitchConfig::default()).ok()?;
    hnr_from_track(&track)
}

/// HNR from an existing pitch track's per-frame clarity.
pub fn hnr_from_track<S: Scalar>(track: &crate::audio::PitchTrack<S>) -> Option<S> {
    let mut acc = S::zero();
    let mut n = 0usize;
    let lo = S::of_f64(1e-6);
    let hi = S::of_f64(1.0 - 1e-6);
    for (f0, &r) in track.f0.iter().zip(&track.clarity) {
        if f0.is_some() {
            let r = r.max(lo).min(hi);
            acc += S::of_f64(10.0) * (r / (S::one() - r)).log10();
            n += 1;
        }
    }
    if n == 0 {
        None
    } else {
        Some(acc / S::of_usize(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64) -> AudioClip<f64> {
        let sr = 16_000u32;
        let n = (secs * sr as f64) as usize;
        AudioClip::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
                .collect(),
            sr,
        )
        .unwrap()
    }

    fn noise(len: usize, seed: u64) -> AudioClip<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        AudioClip::new((0..len).map(|_| rng.gen_range(-0.1..0.1)).collect(), 16_000).unwrap()
    }

    #[test]
    fn zero_db_equalizes_energy() {
        let signal = tone(220.0, 0.5);
        let carrier = noise(3_000, 4);
        let mixed = mix_at_scr(&signal, &carrier, ScrLevel(0.0)).unwrap();
        let scr = scr_between(&signal, &mixed).unwrap();
        assert!(scr.abs() < 1e-6, "scr {scr}");
    }

    #[test]
    fn sixty_db_means_tiny_carrier() {
        let signal = tone(220.0, 0.5);
        let carrier = noise(8_000, 9);
        let mixed = mix_at_scr(&signal, &carrier, ScrLevel(60.0)).unwrap();
        let e_sig = signal.energy();
        let e_diff: f64 = signal
            .samples
            .iter()
            .zip(&mixed.samples)
            .map(|(a, b)| (b - a) * (b - a))
            .sum();
        assert!((e_diff / e_sig - 1e-6).abs() < 1e-12);
    }

    #[test]
    fn self_mix_at_zero_doubles() {
        let signal = tone(220.0, 0.25);
        let mixed = mix_at_scr(&signal, &signal, ScrLevel(0.0)).unwrap();
        for (a, b) in signal.samples.iter().zip(&mixed.samples) {
            assert!((b - 2.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn gain_doubling_drops_scr_by_six_db() {
        let signal = tone(220.0, 0.5);
        let carrier = noise(8_000, 5);
        let once = signal.add_scaled(&carrier, 0.01).unwrap();
        let twice = signal.add_scaled(&carrier, 0.02).unwrap();
        let scr1 = scr_between(&signal, &once).unwrap();
        let scr2 = scr_between(&signal, &twice).unwrap();
        assert!((scr1 - scr2 - 20.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn zero_energy_carrier_rejected() {
        let signal = tone(220.0, 0.2);
        let silent = AudioClip::new(vec![0.0f64; 100], 16_000).unwrap();
        assert!(mix_at_scr(&signal, &silent, ScrLevel(0.0)).is_err());
        assert!(mix_at_scr(&silent, &signal, ScrLevel(0.0)).is_err());
    }

    #[test]
    fn identical_pair_metrics() {
        let clip = tone(330.0, 0.3);
        let m = quality_metrics(&clip, &clip).unwrap();
        assert_eq!(m.l2, 0.0);
        assert_eq!(m.linf, 0.0);
        assert!(m.scr_db.is_none());
    }

    #[test]
    fn constant_offset_metrics() {
        let clip = tone(330.0, 0.25);
        let shifted = AudioClip::new(
            clip.samples.iter().map(|s| s + 0.1).collect(),
            clip.sample_rate,
        )
        .unwrap();
        let m = quality_metrics(&clip, &shifted).unwrap();
        let n = clip.len() as f64;
        assert!((m.linf - 0.1).abs() < 1e-12);
        assert!((m.l2 - 0.1 * n.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn reported_scr_matches_mix() {
        let signal = tone(220.0, 0.5);
        let carrier = noise(8_000, 77);
        let mixed = mix_at_scr(&signal, &carrier, ScrLevel(20.0)).unwrap();
        let m = quality_metrics(&signal, &mixed).unwrap();
        assert!((m.scr_db.unwrap() - 20.0).abs() < 0.1);
    }

    #[test]
    fn length_mismatch_errors() {
        let a = tone(220.0, 0.25);
        let b = tone(220.0, 0.5);
        assert!(quality_metrics(&a, &b).is_err());
    }

    #[test]
    fn tone_has_high_hnr_noise_low() {
        let h_tone = hnr(&tone(220.0, 0.5)).unwrap();
        assert!(h_tone > 20.0, "tone HNR {h_tone}");
        let noisy = noise(8_000, 3);
        if let Some(h_noise) = hnr(&noisy) {
            assert!(h_noise < h_tone);
        }
    }
}
