//! Desk-scale laboratory for black-box audio attacks on speaker-recognition
//! models: DSP primitives, trainable speaker models, parrot-speech surrogate
//! training, perturbation carriers, perceptual scoring, and the two-stage
//! carrier-weight attack, plus the evaluation harnesses that tie them
//! together.

pub mod audio;
pub mod attack;
pub mod eval;
pub mod fixtures;
pub mod manifest;
pub mod models;
pub mod parrot;
pub mod pipeline;
pub mod perception;
pub mod report;
pub mod carriers;
pub mod error;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar for the shipped pipeline; all CLI work runs at f64.
pub type Sample = f64;

/// Concrete aliases at the default precision.
pub type Clip = audio::AudioClip<Sample>;
pub type Mfcc = audio::MfccMatrix<Sample>;
pub type Pitch = audio::PitchTrack<Sample>;
