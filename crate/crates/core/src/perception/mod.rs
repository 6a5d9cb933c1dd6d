//! Perceptual-quality side of the lab: the speech-regression score (SRS)
//! model, its quality-feature front end, the documented heuristic labeler
//! that bootstraps it without human data, and the Pearson/Spearman harness
//! for validating any metric against human scores.

mod forest;

pub use forest::{ForestConfig, RandomForest};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{
    estimate_pitch, hnr, load_wav, mfcc, resample, AudioClip, MfccConfig, PitchConfig,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fixed order of the quality features; `extract_quality_features` returns
/// exactly this layout.
pub const QUALITY_FEATURE_NAMES: [&str; 8] = [
    "scr_db",
    "l2",
    "linf",
    "hnr_delta_db",
    "mfcc_dist_mean",
    "mfcc_dist_max",
    "pitch_rms_dev_semitones",
    "duration_ratio",
];

/// SCR cap substituted when the pair is identical (infinite SCR).
pub const SCR_CAP_DB: f64 = 60.0;

/// One human (or heuristic) rating of an (original, perturbed) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub original: PathBuf,
    pub perturbed: PathBuf,
    /// Similarity score on the 1 (worst) to 7 (best) scale.
    pub score: f64,
}

/// Strict parse of a delimited rating file: `original,perturbed,score` per
/// line, optional header, scores restricted to [1, 7].
pub fn parse_rating_file(path: impl AsRef<Path>) -> Result<Vec<RatingRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.eq_ignore_ascii_case("original,perturbed,score"))
        {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Manifest(format!(
                "rating line {} malformed: `{line}`",
                lineno + 1
            )));
        }
        let score: f64 = parts[2].parse().map_err(|_| {
            Error::Manifest(format!("rating line {}: bad score `{}`", lineno + 1, parts[2]))
        })?;
        if !(1.0..=7.0).contains(&score) {
            return Err(Error::Manifest(format!(
                "rating line {}: score {score} outside [1, 7]",
                lineno + 1
            )));
        }
        records.push(RatingRecord {
            original: parts[0].into(),
            perturbed: parts[1].into(),
            score,
        });
    }
    Ok(records)
}

/// Quality features of a clip pair, in [`QUALITY_FEATURE_NAMES`] order.
/// Clips are aligned by zero-padding the shorter one; the duration ratio
/// keeps the original lengths visible to the regressor.
pub fn extract_quality_features<S: Scalar>(
    original: &AudioClip<S>,
    perturbed: &AudioClip<S>,
) -> Result<Vec<S>> {
    if perturbed.len() > original.len() {
        let mut samples = original.samples.clone();
        samples.resize(perturbed.len(), S::zero());
        let padded = AudioClip {
            samples,
            sample_rate: original.sample_rate,
        };
        let mut f = PairFeatureExtractor::new(&padded)?.features(perturbed)?;
        f[7] = S::of_usize(perturbed.len()) / S::of_usize(original.len().max(1));
        return Ok(f);
    }
    PairFeatureExtractor::new(original)?.features(perturbed)
}

/// Precomputes the original-side artifacts (pitch track, harmonicity, MFCC,
/// energy) so many perturbed clips can be scored against one original
/// cheaply. The hot path of every attack loop.
pub struct PairFeatureExtractor<S> {
    original: AudioClip<S>,
    orig_energy: S,
    orig_hnr: Option<S>,
    orig_mfcc: Option<crate::audio::MfccMatrix<S>>,
    orig_track: Option<crate::audio::PitchTrack<S>>,
    mfcc_cfg: MfccConfig,
    pitch_cfg: PitchConfig,
}

impl<S: Scalar> PairFeatureExtractor<S> {
    pub fn new(original: &AudioClip<S>) -> Result<Self> {
        let mfcc_cfg = MfccConfig::default();
        let pitch_cfg = PitchConfig::default();
        Ok(Self {
            original: original.clone(),
            orig_energy: original.energy(),
            orig_hnr: hnr(original),
            orig_mfcc: mfcc(original, &mfcc_cfg).ok(),
            orig_track: estimate_pitch(original, &pitch_cfg).ok(),
            mfcc_cfg,
            pitch_cfg,
        })
    }

    pub fn features(&self, perturbed: &AudioClip<S>) -> Result<Vec<S>> {
        if self.original.sample_rate != perturbed.sample_rate {
            return Err(Error::InvalidAudio(
                "cannot compare clips at different sample rates".into(),
            ));
        }
        let ratio = S::of_usize(perturbed.len().max(1)) / S::of_usize(self.original.len().max(1));
        let mut padded;
        let b: &AudioClip<S> = if perturbed.len() < self.original.len() {
            let mut samples = perturbed.samples.clone();
            samples.resize(self.original.len(), S::zero());
            padded = perturbed.clone();
            padded.samples = samples;
            &padded
        } else {
            perturbed
        };

        let mut l2sq = S::zero();
        let mut linf = S::zero();
        let mut e_diff = S::zero();
        for (&x, &y) in self.original.samples.iter().zip(&b.samples) {
            let d = y - x;
            l2sq += d * d;
            linf = linf.max(d.abs());
        }
        e_diff += l2sq;
        let cap = S::of_f64(SCR_CAP_DB);
        let scr = if self.orig_energy > S::zero() && e_diff > S::zero() {
            (S::of_f64(10.0) * (self.orig_energy / e_diff).log10()).min(cap)
        } else {
            cap
        };

        // One pitch track of the perturbed clip feeds both the HNR delta and
        // the semitone deviation.
        let track_b = estimate_pitch(b, &self.pitch_cfg).ok();
        let hnr_delta = match (
            track_b.as_ref().and_then(crate::audio::hnr_from_track),
            self.orig_hnr,
        ) {
            (Some(hb), Some(ha)) => hb - ha,
            _ => S::zero(),
        };

        let (mut dist_mean, mut dist_max) = (S::zero(), S::zero());
        if let (Some(ma), Ok(mb)) = (&self.orig_mfcc, mfcc(b, &self.mfcc_cfg)) {
            let mut acc = S::zero();
            let mut n = 0usize;
            for (ra, rb) in ma.rows().zip(mb.rows()) {
                let d: S = ra
                    .iter()
                    .zip(rb)
                    .map(|(&u, &v)| (u - v) * (u - v))
                    .sum::<S>()
                    .sqrt();
                acc += d;
                dist_max = dist_max.max(d);
                n += 1;
            }
            if n > 0 {
                dist_mean = acc / S::of_usize(n);
            }
        }

        let pitch_dev = match (&self.orig_track, &track_b) {
            (Some(ta), Some(tb)) => ta.rms_semitone_deviation(tb),
            _ => S::zero(),
        };

        Ok(vec![
            scr,
            l2sq.sqrt(),
            linf,
            hnr_delta,
            dist_mean,
            dist_max,
            pitch_dev,
            ratio,
        ])
    }

    /// SRS of a perturbed clip under `model`, using the cached original.
    pub fn srs(&self, model: &SrsModel<S>, perturbed: &AudioClip<S>) -> Result<S> {
        Ok(model.predict(&self.features(perturbed)?))
    }
}

/// Documented heuristic labeler: a monotone map from a weighted feature
/// distance onto the 1-7 scale. It stands in for human ratings so the lab is
/// runnable end to end; models trained from it are tagged "heuristic" and
/// real rating files retrain drop-in via [`train_srs`].
pub fn heuristic_score<S: Scalar>(features: &[S]) -> f64 {
    let f = |i: usize| features[i].as_f64();
    let scr = f(0);
    let linf = f(2);
    let hnr_delta = f(3);
    let mfcc_mean = f(4);
    let pitch_dev = f(6);
    let ratio = f(7).max(1e-6);
    let z = 0.06 * (35.0 - scr).max(0.0)
        + 1.5 * linf.min(1.0)
        + 0.35 * mfcc_mean
        + 0.12 * pitch_dev
        + 2.5 * ratio.ln().abs()
        + 0.02 * hnr_delta.abs();
    (1.0 + 6.0 * (-0.35 * z).exp()).clamp(1.0, 7.0)
}

/// Trained SRS regressor; predictions are clamped to [1, 7].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrsModel<S> {
    pub forest: RandomForest<S>,
    /// "heuristic" for the bootstrap labeler, otherwise the rating source.
    pub provenance: String,
}

impl<S: Scalar> SrsModel<S> {
    pub fn predict(&self, features: &[S]) -> S {
        self.forest
            .predict(features)
            .max(S::one())
            .min(S::of_f64(7.0))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::report::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Minimum number of rating records accepted by [`train_srs`].
pub const MIN_RATING_RECORDS: usize = 30;

/// Train the SRS forest from rating records whose paths are relative to
/// `base_dir`; clips are resampled to `working_rate` before feature
/// extraction.
pub fn train_srs<S: Scalar>(
    records: &[RatingRecord],
    base_dir: &Path,
    working_rate: u32,
    cfg: &ForestConfig,
) -> Result<SrsModel<S>> {
    if records.len() < MIN_RATING_RECORDS {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_RATING_RECORDS} rating records, got {}",
            records.len()
        )));
    }
    let mut features = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        let orig: AudioClip<S> = load_wav(base_dir.join(&r.original))?;
        let pert: AudioClip<S> = load_wav(base_dir.join(&r.perturbed))?;
        let orig = resample(&orig, working_rate)?;
        let pert = resample(&pert, working_rate)?;
        features.push(extract_quality_features(&orig, &pert)?);
        labels.push(S::of_f64(r.score));
    }
    train_srs_from_features(&features, &labels, cfg, "ratings")
}

/// Fit directly on precomputed features (used by tests and the bootstrap).
pub fn train_srs_from_features<S: Scalar>(
    features: &[Vec<S>],
    labels: &[S],
    cfg: &ForestConfig,
    provenance: &str,
) -> Result<SrsModel<S>> {
    let forest = RandomForest::fit(features, labels, cfg)?;
    Ok(SrsModel {
        forest,
        provenance: provenance.to_string(),
    })
}

/// Predict the SRS for an (original, perturbed) pair.
pub fn srs_score<S: Scalar>(
    model: &SrsModel<S>,
    original: &AudioClip<S>,
    perturbed: &AudioClip<S>,
) -> Result<S> {
    Ok(model.predict(&extract_quality_features(original, perturbed)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValidation<S> {
    pub pearson: S,
    pub spearman: S,
}

/// Pearson and Spearman correlation of a candidate metric against human
/// scores.
pub fn validate_metric<S: Scalar>(metric: &[S], human: &[S]) -> Result<MetricValidation<S>> {
    Ok(MetricValidation {
        pearson: pearson(metric, human)?,
        spearman: spearman(metric, human)?,
    })
}

pub fn pearson<S: Scalar>(x: &[S], y: &[S]) -> Result<S> {
    check_pair(x, y)?;
    let n = S::of_usize(x.len());
    let mx = x.iter().copied().sum::<S>() / n;
    let my = y.iter().copied().sum::<S>() / n;
    let mut sxy = S::zero();
    let mut sxx = S::zero();
    let mut syy = S::zero();
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= S::zero() || syy <= S::zero() {
        return Err(Error::InvalidArgument(
            "correlation undefined for zero-variance input".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman<S: Scalar>(x: &[S], y: &[S]) -> Result<S> {
    check_pair(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

fn check_pair<S: Scalar>(x: &[S], y: &[S]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(
            "need at least 3 points for a correlation".into(),
        ));
    }
    Ok(())
}

fn average_ranks<S: Scalar>(values: &[S]) -> Vec<S> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![S::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Average 1-based rank over the tie run [i, j].
        let avg = S::of_f64((i + j) as f64 / 2.0 + 1.0);
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{mix_at_scr, ScrLevel};
    use crate::fixtures::{desk_voices, synth_utterance};

    fn speech() -> AudioClip<f64> {
        synth_utterance(&desk_voices(7, 6)[0], 42, 1.0, 16_000)
    }

    fn noise(len: usize, seed: u64) -> AudioClip<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        AudioClip {
            samples: (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            sample_rate: 16_000,
        }
    }

    #[test]
    fn identical_pair_features_are_null() {
        let clip = speech();
        let f = extract_quality_features(&clip, &clip).unwrap();
        assert_eq!(f.len(), QUALITY_FEATURE_NAMES.len());
        assert_eq!(f[0], SCR_CAP_DB); // capped SCR
        assert_eq!(f[1], 0.0);
        assert_eq!(f[2], 0.0);
        assert_eq!(f[4], 0.0);
        assert_eq!(f[7], 1.0);
        assert!(heuristic_score(&f) >= 6.9);
    }

    #[test]
    fn scr_feature_tracks_mix_level() {
        let clip = speech();
        let n = noise(clip.len(), 3);
        let at0 = mix_at_scr(&clip, &n, ScrLevel(0.0)).unwrap();
        let at30 = mix_at_scr(&clip, &n, ScrLevel(30.0)).unwrap();
        let f0 = extract_quality_features(&clip, &at0).unwrap();
        let f30 = extract_quality_features(&clip, &at30).unwrap();
        assert!((f30[0] - f0[0] - 30.0).abs() < 0.1);
        // Heuristic labels are monotone: quieter carrier scores better.
        assert!(heuristic_score(&f30) > heuristic_score(&f0));
    }

    #[test]
    fn feature_vector_length_is_constant() {
        let clip = speech();
        let n = noise(clip.len() / 2, 5);
        let f1 = extract_quality_features(&clip, &clip).unwrap();
        let padded = extract_quality_features(&clip, &n).unwrap();
        assert_eq!(f1.len(), padded.len());
    }

    #[test]
    fn pearson_exact_on_affine_data() {
        let x = vec![1.0f64, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_sees_monotone_nonlinear_as_one() {
        let x = vec![1.0f64, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!(pearson(&x, &y).unwrap() < 1.0);
    }

    #[test]
    fn hand_computed_five_point_oracles() {
        // x = 1..5, y = [2, 1, 4, 3, 7]:
        //   sum dx*dy = 12, sum dx^2 = 10, sum dy^2 = 21.2
        //   ranks of y have d = [-1, 1, -1, 1, 0] => rho = 1 - 6*4/120 = 0.8
        let x = vec![1.0f64, 2.0, 3.0, 4.0, 5.0];
        let y = vec![2.0f64, 1.0, 4.0, 3.0, 7.0];
        let expect_pearson = 12.0 / (10.0f64 * 21.2).sqrt();
        assert!((pearson(&x, &y).unwrap() - expect_pearson).abs() < 1e-9);
        assert!((spearman(&x, &y).unwrap() - 0.8).abs() < 1e-9);

        // Tied case: y = [1, 2, 2, 4, 5] with average ranks [1, 2.5, 2.5, 4, 5]
        //   rho = 9.5 / sqrt(10 * 9.5) = sqrt(0.95)
        let yt = vec![1.0f64, 2.0, 2.0, 4.0, 5.0];
        assert!((spearman(&x, &yt).unwrap() - 0.95f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn zero_variance_is_an_error() {
        let x = vec![1.0f64, 1.0, 1.0, 1.0];
        let y = vec![1.0f64, 2.0, 3.0, 4.0];
        assert!(pearson(&x, &y).is_err());
        assert!(validate_metric(&x, &y).is_err());
    }

    #[test]
    fn rating_parse_rejects_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "original,perturbed,score\na.wav,b.wav,8.0\n").unwrap();
        assert!(parse_rating_file(&path).is_err());
        std::fs::write(&path, "a.wav,b.wav,5.5\n").unwrap();
        let recs = parse_rating_file(&path).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].score, 5.5);
    }

    #[test]
    fn srs_trained_on_monotone_labels_scores_clean_high() {
        // Synthetic (features, label) pairs from the heuristic labeler over a
        // range of perturbation strengths.
        let clip = speech();
        let n = noise(clip.len(), 9);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for scr in [0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 25.0, 30.0, 40.0, 50.0] {
            let p = mix_at_scr(&clip, &n, ScrLevel(scr)).unwrap();
            let f = extract_quality_features(&clip, &p).unwrap();
            labels.push(heuristic_score(&f));
            feats.push(f);
        }
        // Include exact-clean pairs so the forest sees the top of the scale.
        for _ in 0..4 {
            let f = extract_quality_features(&clip, &clip).unwrap();
            labels.push(heuristic_score(&f));
            feats.push(f);
        }
        let model =
            train_srs_from_features(&feats, &labels, &ForestConfig::default(), "heuristic")
                .unwrap();
        let clean = srs_score(&model, &clip, &clip).unwrap();
        assert!(clean >= 6.5, "clean SRS {clean}");
        let noisy = srs_score(&model, &clip, &mix_at_scr(&clip, &n, ScrLevel(0.0)).unwrap()).unwrap();
        assert!(noisy < clean);
        assert!((1.0..=7.0).contains(&noisy));
    }

    proptest::proptest! {
        #[test]
        fn pearson_affine_invariance(
            xs in proptest::collection::vec_deque(-50.0f64..50.0, 5..20),
            a in 0.1f64..5.0,
            b in -10.0f64..10.0,
        ) {
            let x: Vec<f64> = xs.iter().copied().collect();
            let y: Vec<f64> = x.iter().map(|v| v.sin() * 3.0 + v * 0.5).collect();
            let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            if let (Ok(r1), Ok(r2)) = (pearson(&x, &y), pearson(&x2, &y)) {
                proptest::prop_assert!((r1 - r2).abs() < 1e-10);
            }
        }

        #[test]
        fn spearman_monotone_invariance(
            xs in proptest::collection::vec_deque(-20.0f64..20.0, 5..20),
        ) {
            let x: Vec<f64> = xs.iter().copied().collect();
            let y: Vec<f64> = x.iter().map(|v| 0.3 * v + (v * 0.7).cos()).collect();
            let x2: Vec<f64> = x.iter().map(|v| v.exp()).collect(); // strictly increasing
            if let (Ok(r1), Ok(r2)) = (spearman(&x, &y), spearman(&x2, &y)) {
                proptest::prop_assert!((r1 - r2).abs() < 1e-10);
            }
        }
    }
}
