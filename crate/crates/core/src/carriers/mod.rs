//! Perturbation carriers: Gaussian noise, feature-twisted speech deltas,
//! environmental sounds, and pitch-twisted environmental sounds.
//!
//! All carriers compose under the same `x + gamma * delta` mixing algebra.
//! Noise carriers are unit-variance; environmental carriers are normalized
//! to unit mean power so the weight budget means the same thing across the
//! library.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, resample, shift_pitch_with_limit, time_stretch, AudioClip};
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::scalar::Scalar;

/// Paper-grid bounds for feature twisting.
pub const PITCH_SHIFT_BOUND: f64 = 25.0;
pub const RATE_GRID_STEP: f64 = 0.2;
pub const RATE_GRID_MIN: f64 = 0.2;
pub const RATE_GRID_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierKind {
    Noise,
    FeatureTwisted,
    Environmental,
    PitchTwistedEnvironmental,
}

/// A perturbation waveform tagged with how it was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Carrier<S> {
    pub id: String,
    pub kind: CarrierKind,
    pub category: Option<String>,
    pub waveform: AudioClip<S>,
    /// Semitone shift baked into the waveform (0 when untouched).
    pub semitones: f64,
    /// Rhythm rate baked into the waveform (1.0 when untouched).
    pub rate: f64,
}

/// Ordered, id-unique carrier collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierLibrary<S> {
    pub carriers: Vec<Carrier<S>>,
}

impl<S: Scalar> CarrierLibrary<S> {
    pub fn len(&self) -> usize {
        self.carriers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carriers.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Carrier<S>> {
        self.carriers.iter().find(|c| c.id == id)
    }
}

/// Unit-variance Gaussian noise carrier, deterministic per seed.
pub fn make_noise_carrier<S: Scalar>(len: usize, sample_rate: u32, seed: u64) -> Result<Carrier<S>> {
    if len == 0 {
        return Err(Error::InvalidArgument("noise carrier needs length > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len)
        .map(|_| S::of_f64(rng.sample::<f64, _>(rand_distr::StandardNormal)))
        .collect();
    Ok(Carrier {
        id: format!("noise_{seed}"),
        kind: CarrierKind::Noise,
        category: None,
        waveform: AudioClip {
            samples,
            sample_rate,
        },
        semitones: 0.0,
        rate: 1.0,
    })
}

fn on_pitch_grid(semitones: f64) -> bool {
    semitones.abs() <= PITCH_SHIFT_BOUND + 1e-9 && (semitones - semitones.round()).abs() < 1e-9
}

fn on_rate_grid(rate: f64) -> bool {
    if !(RATE_GRID_MIN - 1e-9..=RATE_GRID_MAX + 1e-9).contains(&rate) {
        return false;
    }
    let steps = rate / RATE_GRID_STEP;
    (steps - steps.round()).abs() < 1e-6
}

/// Every (semitone, rate) point of the feature-twist search grid:
/// integers -25..=25 by rates 0.2..=2.0 step 0.2 (510 points).
pub fn feature_twist_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(51 * 10);
    for s in -25..=25i32 {
        for r in 1..=10 {
            grid.push((s as f64, r as f64 * RATE_GRID_STEP));
        }
    }
    grid
}

/// Feature-twisted carrier: the delta between the pitch/rate-twisted base
/// and the base itself, aligned to the base length. Zero parameters give a
/// (near) zero carrier, so feature-twisted deltas are the one kind allowed
/// to carry no energy.
pub fn make_feature_twisted<S: Scalar>(
    base: &AudioClip<S>,
    semitones: f64,
    rate: f64,
) -> Result<Carrier<S>> {
    if !on_pitch_grid(semitones) {
        return Err(Error::InvalidArgument(format!(
            "pitch shift {semitones} off the integer grid within +-{PITCH_SHIFT_BOUND}"
        )));
    }
    if !on_rate_grid(rate) {
        return Err(Error::InvalidArgument(format!(
            "rate {rate} off the {RATE_GRID_STEP}-step grid in [{RATE_GRID_MIN}, {RATE_GRID_MAX}]"
        )));
    }
    let shifted = shift_pitch_with_limit(base, semitones, PITCH_SHIFT_BOUND)?;
    let twisted = time_stretch(&shifted, rate)?;
    let aligned = twisted.tiled_to(base.len());
    let samples = aligned
        .samples
        .iter()
        .zip(&base.samples)
        .map(|(&t, &b)| t - b)
        .collect();
    Ok(Carrier {
        id: format!("twist_{semitones}_{rate}"),
        kind: CarrierKind::FeatureTwisted,
        category: None,
        waveform: AudioClip {
            samples,
            sample_rate: base.sample_rate,
        },
        semitones,
        rate,
    })
}

/// Load the manifest's environmental sounds at the working rate, normalized
/// to unit mean power, in manifest order.
pub fn load_environmental_library<S: Scalar>(manifest: &Manifest) -> Result<CarrierLibrary<S>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut carriers = Vec::with_capacity(manifest.carriers.len());
    for entry in &manifest.carriers {
        if !seen.insert(entry.id.clone()) {
            return Err(Error::Manifest(format!("duplicate carrier id `{}`", entry.id)));
        }
        let clip: AudioClip<S> = load_wav(manifest.resolve(&entry.path))?;
        let mut clip = resample(&clip, manifest.working_rate)?;
        clip.normalize_power()?;
        carriers.push(Carrier {
            id: entry.id.clone(),
            kind: CarrierKind::Environmental,
            category: Some(entry.category.clone()),
            waveform: clip,
            semitones: 0.0,
            rate: 1.0,
        });
    }
    Ok(CarrierLibrary { carriers })
}

/// Pitch-twist an environmental carrier and renormalize to unit mean power.
pub fn pitch_twist_carrier<S: Scalar>(carrier: &Carrier<S>, semitones: f64) -> Result<Carrier<S>> {
    if semitones.abs() > PITCH_SHIFT_BOUND + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "pitch twist {semitones} beyond +-{PITCH_SHIFT_BOUND} semitones"
        )));
    }
    let mut waveform = shift_pitch_with_limit(&carrier.waveform, semitones, PITCH_SHIFT_BOUND)?;
    waveform.normalize_power()?;
    Ok(Carrier {
        id: carrier.id.clone(),
        kind: CarrierKind::PitchTwistedEnvironmental,
        category: carrier.category.clone(),
        waveform,
        semitones,
        rate: carrier.rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{sine_clip, synth_environmental};

    #[test]
    fn noise_carrier_is_seed_deterministic_unit_variance() {
        let a: Carrier<f64> = make_noise_carrier(16_000, 16_000, 5).unwrap();
        let b: Carrier<f64> = make_noise_carrier(16_000, 16_000, 5).unwrap();
        assert_eq!(a.waveform.samples, b.waveform.samples);
        let var = a.waveform.mean_power();
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn different_seeds_decorrelate() {
        let a: Carrier<f64> = make_noise_carrier(16_000, 16_000, 1).unwrap();
        let b: Carrier<f64> = make_noise_carrier(16_000, 16_000, 2).unwrap();
        let n = a.waveform.len() as f64;
        let corr: f64 = a
            .waveform
            .samples
            .iter()
            .zip(&b.waveform.samples)
            .map(|(x, y)| x * y)
            .sum::<f64>()
            / n;
        assert!(corr.abs() < 0.05, "correlation {corr}");
    }

    #[test]
    fn identity_twist_has_near_zero_energy() {
        let base = sine_clip::<f64>(220.0, 0.5, 16_000);
        let c = make_feature_twisted(&base, 0.0, 1.0).unwrap();
        assert!(c.waveform.energy() < 1e-3 * base.energy());
    }

    #[test]
    fn octave_twist_contains_doubled_frequency() {
        use crate::audio::{estimate_pitch, PitchConfig};
        let base = sine_clip::<f64>(220.0, 1.0, 16_000);
        let c = make_feature_twisted(&base, 12.0, 1.0).unwrap();
        // delta = shifted - base; adding it back to the base recovers the
        // shifted signal, whose pitch is 440.
        let recovered = base.add_scaled(&c.waveform, 1.0).unwrap();
        let f = estimate_pitch(&recovered, &PitchConfig::default())
            .unwrap()
            .mean_f0()
            .unwrap();
        assert!((f - 440.0).abs() / 440.0 < 0.02, "{f}");
    }

    #[test]
    fn grid_has_510_points_and_rejects_off_grid() {
        assert_eq!(feature_twist_grid().len(), 510);
        let base = sine_clip::<f64>(220.0, 0.3, 16_000);
        assert!(make_feature_twisted(&base, 0.5, 1.0).is_err());
        assert!(make_feature_twisted(&base, 26.0, 1.0).is_err());
        assert!(make_feature_twisted(&base, 1.0, 0.3).is_err());
        assert!(make_feature_twisted(&base, 1.0, 2.2).is_err());
    }

    #[test]
    fn environmental_library_loads_normalized_and_order_stable() {
        use crate::fixtures::{generate_corpus, CorpusConfig};
        let dir = tempfile::tempdir().unwrap();
        let cfg = CorpusConfig {
            n_targets: 2,
            n_pool: 2,
            train_clips_per_target: 1,
            test_clips_per_target: 1,
            clips_per_pool_speaker: 1,
            carriers_per_category: 2,
            rating_clips: 0,
            ..CorpusConfig::default()
        };
        let manifest = generate_corpus(&cfg, dir.path()).unwrap();
        let lib: CarrierLibrary<f64> = load_environmental_library(&manifest).unwrap();
        assert_eq!(lib.len(), 10); // 5 categories x 2
        for c in &lib.carriers {
            assert!((c.waveform.mean_power() - 1.0).abs() < 1e-6);
            assert_eq!(c.kind, CarrierKind::Environmental);
        }
        // Idempotent, order-stable load.
        let again: CarrierLibrary<f64> = load_environmental_library(&manifest).unwrap();
        assert_eq!(lib, again);
    }

    #[test]
    fn pitch_twist_respects_bounds_and_renormalizes() {
        let base: AudioClip<f64> = synth_environmental("human", 0, 7, 1.0, 16_000);
        let mut carrier = Carrier {
            id: "human_00".into(),
            kind: CarrierKind::Environmental,
            category: Some("human".into()),
            waveform: base,
            semitones: 0.0,
            rate: 1.0,
        };
        carrier.waveform.normalize_power().unwrap();

        let zero = pitch_twist_carrier(&carrier, 0.0).unwrap();
        let rel: f64 = zero
            .waveform
            .samples
            .iter()
            .zip(&carrier.waveform.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / carrier.waveform.energy();
        assert!(rel < 1e-3, "relative L2^2 {rel}");

        assert!(pitch_twist_carrier(&carrier, 25.0).is_ok());
        assert!(pitch_twist_carrier(&carrier, -25.0).is_ok());
        assert!(pitch_twist_carrier(&carrier, 26.0).is_err());
        assert!(pitch_twist_carrier(&carrier, -26.0).is_err());

        let twisted = pitch_twist_carrier(&carrier, 12.0).unwrap();
        assert_eq!(twisted.kind, CarrierKind::PitchTwistedEnvironmental);
        assert!((twisted.waveform.mean_power() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tone_carrier_twist_doubles_dominant_frequency() {
        use crate::audio::{estimate_pitch, PitchConfig};
        let mut base = sine_clip::<f64>(220.0, 1.0, 16_000);
        base.normalize_power().unwrap();
        let carrier = Carrier {
            id: "tone".into(),
            kind: CarrierKind::Environmental,
            category: None,
            waveform: base,
            semitones: 0.0,
            rate: 1.0,
        };
        let twisted = pitch_twist_carrier(&carrier, 12.0).unwrap();
        let f = estimate_pitch(&twisted.waveform, &PitchConfig::default())
            .unwrap()
            .mean_f0()
            .unwrap();
        assert!((f - 440.0).abs() / 440.0 < 0.02, "{f}");
    }
}
