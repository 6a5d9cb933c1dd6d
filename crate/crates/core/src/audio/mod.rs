//! Audio I/O and DSP primitives: clips, WAV round-trip, resampling, MFCC,
//! pitch tracking, phase-vocoder pitch/time manipulation, SCR mixing, and the
//! distance/quality measures used by the perception side.

mod mfcc;
mod mix;
mod pitch;
mod vocoder;
mod wav;

pub use mfcc::{mfcc, MfccConfig, MfccMatrix, MfccPipeline};
pub use mix::{hnr, hnr_from_track, mix_at_scr, quality_metrics, scr_between, QualityMetrics, ScrLevel};
pub use pitch::{estimate_pitch, pitch_distance, semitone_interval, PitchConfig, PitchTrack};
pub use vocoder::{resample, shift_pitch, shift_pitch_with_limit, time_stretch, STRETCH_RATE_RANGE};
pub use wav::{load_wav, save_wav};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default working sample rate for the whole pipeline.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono PCM waveform plus its sample rate. The universal signal currency of
/// the crate: originals, carriers, and adversarial outputs are all clips.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AudioClip<S> {
    pub samples: Vec<S>,
    pub sample_rate: u32,
}

impl<S: Scalar> AudioClip<S> {
    /// Validating constructor: positive rate, nonempty, finite samples.
    pub fn new(samples: Vec<S>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidAudio("zero-length audio".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidAudio("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> S {
        self.samples.iter().map(|&s| s * s).sum()
    }

    /// Mean squared sample value (energy per sample).
    pub fn mean_power(&self) -> S {
        self.energy() / S::of_usize(self.samples.len().max(1))
    }

    pub fn peak(&self) -> S {
        self.samples
            .iter()
            .fold(S::zero(), |acc, &s| acc.max(s.abs()))
    }

    /// In-place gain.
    pub fn scale(&mut self, gain: S) {
        for s in &mut self.samples {
            *s *= gain;
        }
    }

    /// Scale so the mean power becomes exactly one. Errors on silent input.
    pub fn normalize_power(&mut self) -> Result<()> {
        let p = self.mean_power();
        if p <= S::zero() {
            return Err(Error::InvalidAudio(
                "cannot normalize zero-energy audio".into(),
            ));
        }
        self.scale(S::one() / p.sqrt());
        Ok(())
    }

    /// Tile (loop) or truncate to exactly `len` samples.
    pub fn tiled_to(&self, len: usize) -> Self {
        let mut samples = Vec::with_capacity(len);
        while samples.len() < len {
            let take = (len - samples.len()).min(self.samples.len());
            samples.extend_from_slice(&self.samples[..take]);
        }
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// First `secs` seconds (whole clip if shorter).
    pub fn head_secs(&self, secs: f64) -> Self {
        let n = ((secs * self.sample_rate as f64).round() as usize)
            .clamp(1, self.samples.len());
        Self {
            samples: self.samples[..n].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum with a gain on `other` (tiled/truncated to match).
    pub fn add_scaled(&self, other: &Self, gain: S) -> Result<Self> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::InvalidAudio(format!(
                "sample-rate mismatch: {} vs {}",
                self.sample_rate, other.sample_rate
            )));
        }
        let aligned = other.tiled_to(self.samples.len());
        let samples = self
            .samples
            .iter()
            .zip(aligned.samples.iter())
            .map(|(&a, &b)| a + b * gain)
            .collect();
        Ok(Self {
            samples,
            sample_rate: self.sample_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_input() {
        assert!(AudioClip::<f64>::new(vec![], 16_000).is_err());
        assert!(AudioClip::new(vec![0.0f64], 0).is_err());
        assert!(AudioClip::new(vec![f64::NAN], 16_000).is_err());
    }

    #[test]
    fn tiling_loops_and_truncates() {
        let clip = AudioClip::new(vec![1.0f64, 2.0, 3.0], 8_000).unwrap();
        assert_eq!(clip.tiled_to(7).samples, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0]);
        assert_eq!(clip.tiled_to(2).samples, vec![1.0, 2.0]);
    }

    #[test]
    fn power_normalization() {
        let mut clip = AudioClip::new(vec![0.5f64; 1000], 16_000).unwrap();
        clip.normalize_power().unwrap();
        assert!((clip.mean_power() - 1.0).abs() < 1e-12);
    }
}
