//! Speaker-recognition models: GMM-UBM and neural families behind one
//! scoring surface, the CSI/OSI/SV decision functions, and threshold
//! calibration.

mod calibrate;
mod gmm;
mod neural;

pub use calibrate::{
    calibrate_from_scores, far_at, frr_at, osier, CalibrationReport, OsiTrial,
};
pub use gmm::{map_adapt, train_ubm, DiagGmm, MapOptions, UbmTrainOptions, VAR_FLOOR};
pub use neural::{
    preset_hidden, train_neural, train_neural_from_features, train_neural_named, NeuralConfig,
    NeuralModel, ARCH_PRESETS,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, MfccConfig, MfccPipeline};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// GMM-UBM speaker model: a shared background model plus one MAP-adapted
/// mixture per enrolled speaker. Scores are mean per-frame log-likelihood
/// ratios against the UBM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel<S> {
    pub ubm: DiagGmm<S>,
    pub speakers: Vec<(String, DiagGmm<S>)>,
    pub mfcc: MfccConfig,
    pub sample_rate: u32,
}

impl<S: Scalar> GmmModel<S> {
    pub fn frames(&self, clip: &AudioClip<S>) -> Result<Vec<Vec<S>>> {
        let clip = crate::audio::resample(clip, self.sample_rate)?;
        let pipeline = MfccPipeline::new(&self.mfcc, self.sample_rate)?;
        let matrix = pipeline.compute(&clip.samples)?;
        Ok(matrix.rows().map(<[S]>::to_vec).collect())
    }

    /// Per-label log-likelihood-ratio scores over precomputed frames.
    pub fn scores_from_frames(&self, frames: &[Vec<S>]) -> Vec<S> {
        let ubm_ll = self.ubm.mean_log_likelihood(frames);
        self.speakers
            .iter()
            .map(|(_, m)| m.mean_log_likelihood(frames) - ubm_ll)
            .collect()
    }

    /// Enroll a speaker by MAP-adapting the UBM to their frames.
    pub fn enroll(&mut self, label: &str, frames: &[Vec<S>], opts: &MapOptions) -> Result<()> {
        if self.speakers.iter().any(|(l, _)| l == label) {
            return Err(Error::InvalidArgument(format!(
                "label `{label}` already enrolled"
            )));
        }
        let adapted = map_adapt(&self.ubm, frames, opts)?;
        self.speakers.push((label.to_string(), adapted));
        Ok(())
    }
}

/// Task of the deployed recognizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Csi,
    Osi,
    Sv,
}

/// Decision thresholds on the model's own score scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Thresholds<S> {
    pub osi: Option<S>,
    pub sv: Option<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Label(String),
    Accept,
    Reject,
}

impl Outcome {
    pub fn accepted_as(&self, label: &str) -> bool {
        match self {
            Outcome::Label(l) => l == label,
            Outcome::Accept => true,
            Outcome::Reject => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision<S> {
    pub task: Task,
    pub outcome: Outcome,
    pub scores: Vec<(String, S)>,
}

/// A trained speaker model of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpeakerModel<S> {
    Gmm(GmmModel<S>),
    Neural(NeuralModel<S>),
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned on-disk wrapper.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile<S> {
    format_version: u32,
    model: SpeakerModel<S>,
}

impl<S: Scalar> SpeakerModel<S> {
    pub fn family(&self) -> &'static str {
        match self {
            SpeakerModel::Gmm(_) => "gmm-ubm",
            SpeakerModel::Neural(_) => "neural",
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            SpeakerModel::Gmm(g) => g.speakers.iter().map(|(l, _)| l.clone()).collect(),
            SpeakerModel::Neural(n) => n.labels().to_vec(),
        }
    }

    /// Per-label similarity scores in enrolled order. GMM: mean per-frame
    /// log-likelihood ratio vs the UBM; neural: softmax probability.
    pub fn scores(&self, clip: &AudioClip<S>) -> Result<Vec<S>> {
        match self {
            SpeakerModel::Gmm(g) => {
                if g.speakers.is_empty() {
                    return Err(Error::InvalidArgument("no enrolled speakers".into()));
                }
                let frames = g.frames(clip)?;
                let ubm_ll = g.ubm.mean_log_likelihood(&frames);
                Ok(g.speakers
                    .iter()
                    .map(|(_, m)| m.mean_log_likelihood(&frames) - ubm_ll)
                    .collect())
            }
            SpeakerModel::Neural(n) => n.probabilities(clip),
        }
    }

    /// Score a single enrolled label.
    pub fn score(&self, clip: &AudioClip<S>, label: &str) -> Result<S> {
        let labels = self.labels();
        let idx = labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        Ok(self.scores(clip)?[idx])
    }

    /// Softmax over per-label scores; for the neural family this is the
    /// model's own output, for GMM a softmax over log-likelihood ratios.
    pub fn probabilities(&self, clip: &AudioClip<S>) -> Result<Vec<S>> {
        match self {
            SpeakerModel::Neural(n) => n.probabilities(clip),
            SpeakerModel::Gmm(_) => {
                let scores = self.scores(clip)?;
                Ok(softmax_slice(&scores))
            }
        }
    }

    pub fn decide(
        &self,
        clip: &AudioClip<S>,
        task: Task,
        thresholds: &Thresholds<S>,
    ) -> Result<Decision<S>> {
        let labels = self.labels();
        let scores = self.scores(clip)?;
        decide_from_scores(&labels, &scores, task, thresholds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        crate::report::write_json(path, &file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile<S> =
            serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file.model)
    }
}

fn softmax_slice<S: Scalar>(z: &[S]) -> Vec<S> {
    let max = z.iter().fold(S::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<S> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Calibration output: thresholds at the equal-error points plus the rates
/// measured there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport<S> {
    pub thresholds: Thresholds<S>,
    pub sv: CalibrationReport<S>,
    pub osi: CalibrationReport<S>,
    pub osier: S,
}

/// Calibrate OSI/SV thresholds from a dev set of genuine (labeled) and
/// imposter clips, reporting FAR/FRR at the chosen points and the OSIER.
/// SV verifies the model's first enrolled label.
pub fn calibrate_thresholds<S: Scalar>(
    model: &SpeakerModel<S>,
    genuine: &[(String, crate::audio::AudioClip<S>)],
    imposters: &[crate::audio::AudioClip<S>],
) -> Result<ThresholdReport<S>> {
    if genuine.is_empty() || imposters.is_empty() {
        return Err(Error::InsufficientData(
            "dev set needs both enrolled-speaker and imposter clips".into(),
        ));
    }
    let labels = model.labels();
    let first = labels.first().cloned().expect("nonempty labels");

    let mut sv_genuine = Vec::new();
    let mut sv_imposter = Vec::new();
    let mut osi_genuine = Vec::new();
    let mut osi_trials = Vec::new();
    for (label, clip) in genuine {
        let scores = model.scores(clip)?;
        let (max_idx, max) = scores
            .iter()
            .enumerate()
            .fold((0usize, S::neg_infinity()), |acc, (i, &s)| {
                if s > acc.1 {
                    (i, s)
                } else {
                    acc
                }
            });
        osi_genuine.push(max);
        osi_trials.push(calibrate::OsiTrial {
            max_score: max,
            correct_label: &labels[max_idx] == label,
        });
        if label == &first {
            sv_genuine.push(scores[0]);
        } else {
            sv_imposter.push(scores[0]);
        }
    }
    let mut osi_imposter = Vec::new();
    for clip in imposters {
        let scores = model.scores(clip)?;
        osi_imposter.push(scores.iter().fold(S::neg_infinity(), |a, &b| a.max(b)));
        sv_imposter.push(scores[0]);
    }
    if sv_genuine.is_empty() {
        return Err(Error::InsufficientData(
            "dev set has no clips of the first enrolled speaker".into(),
        ));
    }

    let sv = calibrate_from_scores(&sv_genuine, &sv_imposter)?;
    let osi = calibrate_from_scores(&osi_genuine, &osi_imposter)?;
    let osier = osier(&osi_trials, &osi_imposter)?;
    Ok(ThresholdReport {
        thresholds: Thresholds {
            osi: Some(osi.threshold),
            sv: Some(sv.threshold),
        },
        sv,
        osi,
        osier,
    })
}

/// The three decision functions over precomputed scores. Argmax ties break
/// toward the lowest enrolled index.
pub fn decide_from_scores<S: Scalar>(
    labels: &[String],
    scores: &[S],
    task: Task,
    thresholds: &Thresholds<S>,
) -> Result<Decision<S>> {
    if labels.is_empty() || labels.len() != scores.len() {
        return Err(Error::InvalidArgument(
            "labels and scores must be nonempty and parallel".into(),
        ));
    }
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let outcome = match task {
        Task::Csi => Outcome::Label(labels[best].clone()),
        Task::Osi => {
            let theta = thresholds
                .osi
                .ok_or_else(|| Error::InvalidArgument("OSI requires a threshold".into()))?;
            if scores[best] >= theta {
                Outcome::Label(labels[best].clone())
            } else {
                Outcome::Reject
            }
        }
        Task::Sv => {
            let theta = thresholds
                .sv
                .ok_or_else(|| Error::InvalidArgument("SV requires a threshold".into()))?;
            // SV verifies the first enrolled speaker.
            if scores[0] >= theta {
                Outcome::Accept
            } else {
                Outcome::Reject
            }
        }
    };
    Ok(Decision {
        task,
        outcome,
        scores: labels.iter().cloned().zip(scores.iter().copied()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    #[test]
    fn csi_picks_argmax() {
        let d = decide_from_scores(
            &labels(),
            &[0.2f64, 0.9, 0.1],
            Task::Csi,
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(d.outcome, Outcome::Label("b".into()));
    }

    #[test]
    fn csi_tie_breaks_low_index() {
        let d = decide_from_scores(
            &labels(),
            &[0.9f64, 0.9, 0.1],
            Task::Csi,
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(d.outcome, Outcome::Label("a".into()));
    }

    #[test]
    fn osi_rejects_below_threshold() {
        let t = Thresholds {
            osi: Some(0.5f64),
            sv: None,
        };
        let d = decide_from_scores(&labels(), &[0.1, 0.4, 0.2], Task::Osi, &t).unwrap();
        assert_eq!(d.outcome, Outcome::Reject);
        let d = decide_from_scores(&labels(), &[0.1, 0.6, 0.2], Task::Osi, &t).unwrap();
        assert_eq!(d.outcome, Outcome::Label("b".into()));
    }

    #[test]
    fn sv_boundary_is_inclusive() {
        let t = Thresholds {
            osi: None,
            sv: Some(0.5f64),
        };
        let d = decide_from_scores(&labels(), &[0.5, 0.0, 0.0], Task::Sv, &t).unwrap();
        assert_eq!(d.outcome, Outcome::Accept);
        let d = decide_from_scores(&labels(), &[0.49999, 0.9, 0.0], Task::Sv, &t).unwrap();
        assert_eq!(d.outcome, Outcome::Reject);
    }

    #[test]
    fn csi_invariant_under_increasing_transform() {
        let scores = [0.2f64, 0.9, 0.1];
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).exp()).collect();
        let d1 = decide_from_scores(&labels(), &scores, Task::Csi, &Thresholds::default()).unwrap();
        let d2 =
            decide_from_scores(&labels(), &transformed, Task::Csi, &Thresholds::default()).unwrap();
        assert_eq!(d1.outcome, d2.outcome);
    }

    #[test]
    fn missing_threshold_is_an_error() {
        assert!(
            decide_from_scores(&labels(), &[0.1f64, 0.2, 0.3], Task::Osi, &Thresholds::default())
                .is_err()
        );
    }
}
