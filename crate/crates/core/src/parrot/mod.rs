//! Parrot-speech generation: pick the source speaker with the smallest pitch
//! distance to the target, convert it toward the target iteratively, and
//! measure how often the results fool a classifier.
//!
//! The converter is a DSP stand-in for one-shot voice conversion: a full
//! pitch transfer plus a mel-envelope transfer over the first twelve
//! cepstral coefficients. Real VC output can replace it through
//! [`ingest_external_parrots`].

use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{
    estimate_pitch, load_wav, resample, semitone_interval, shift_pitch_with_limit, AudioClip,
    MfccConfig, MfccPipeline, PitchConfig, PitchTrack,
};
use crate::error::{Error, Result};
use crate::manifest::{Gender, Manifest, Role};
use crate::models::{SpeakerModel, Task, Thresholds};
use crate::scalar::Scalar;

/// Cepstral coefficients (excluding c0) moved by the envelope transfer.
const ENVELOPE_COEFFS: usize = 12;

/// Pitch shifts smaller than this are skipped; keeps converged chains stable.
const SHIFT_DEADBAND_SEMITONES: f64 = 0.05;

/// One speaker's loaded audio.
#[derive(Debug, Clone)]
pub struct PoolSpeaker<S> {
    pub id: String,
    pub role: Role,
    pub gender: Option<Gender>,
    pub clips: Vec<AudioClip<S>>,
    pub test_clips: Vec<AudioClip<S>>,
    pub knowledge: Option<AudioClip<S>>,
    pub transcripts: Vec<Vec<String>>,
}

/// All manifest audio resampled to the working rate, ordered by speaker id.
#[derive(Debug, Clone)]
pub struct SpeakerPool<S> {
    pub working_rate: u32,
    pub speakers: Vec<PoolSpeaker<S>>,
}

impl<S: Scalar> SpeakerPool<S> {
    pub fn load(manifest: &Manifest) -> Result<Self> {
        let rate = manifest.working_rate;
        let mut speakers = Vec::new();
        for (id, entry) in &manifest.speakers {
            let load_all = |paths: &[std::path::PathBuf]| -> Result<Vec<AudioClip<S>>> {
                paths
                    .iter()
                    .map(|p| resample(&load_wav(manifest.resolve(p))?, rate))
                    .collect()
            };
            let mut transcripts = Vec::new();
            for t in &entry.transcripts {
                let path = manifest.resolve(t);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                transcripts.push(text.split_whitespace().map(str::to_string).collect());
            }
            speakers.push(PoolSpeaker {
                id: id.clone(),
                role: entry.role,
                gender: entry.gender,
                clips: load_all(&entry.clips)?,
                test_clips: load_all(&entry.test_clips)?,
                knowledge: match &entry.knowledge {
                    Some(p) => Some(resample(&load_wav(manifest.resolve(p))?, rate)?),
                    None => None,
                },
                transcripts,
            });
        }
        Ok(Self {
            working_rate: rate,
            speakers,
        })
    }

    pub fn speaker(&self, id: &str) -> Option<&PoolSpeaker<S>> {
        self.speakers.iter().find(|s| s.id == id)
    }

    pub fn sources(&self) -> impl Iterator<Item = &PoolSpeaker<S>> {
        self.speakers.iter().filter(|s| s.role == Role::SourcePool)
    }

    pub fn targets(&self) -> impl Iterator<Item = &PoolSpeaker<S>> {
        self.speakers.iter().filter(|s| s.role == Role::Target)
    }
}

/// Where a parrot set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParrotProvenance {
    StandIn,
    External,
}

/// Generated parrot clips for one target.
#[derive(Debug, Clone)]
pub struct ParrotSet<S> {
    pub target_label: String,
    pub clips: Vec<AudioClip<S>>,
    pub provenance: ParrotProvenance,
    pub iterations: usize,
}

/// Mean pitch distance (semitones) from a speaker's clips to a target track;
/// unvoiced clips are skipped.
fn mean_distance_to<S: Scalar>(
    clips: &[AudioClip<S>],
    target: &PitchTrack<S>,
    cfg: &PitchConfig,
) -> Option<S> {
    let mut acc = S::zero();
    let mut n = 0usize;
    for clip in clips {
        if let Ok(track) = estimate_pitch(clip, cfg) {
            if let Ok(d) = crate::audio::pitch_distance(&track, target) {
                acc += d;
                n += 1;
            }
        }
    }
    (n > 0).then(|| acc / S::of_usize(n))
}

/// Pick the source speaker with the minimum average pitch distance to the
/// target clip. Ties break toward the lowest speaker id.
pub fn select_source_speaker<S: Scalar>(
    target_clip: &AudioClip<S>,
    pool: &SpeakerPool<S>,
) -> Result<String> {
    let cfg = PitchConfig::default();
    let target_track = estimate_pitch(target_clip, &cfg)?;
    if target_track.mean_f0().is_none() {
        return Err(Error::InvalidAudio("target clip is fully unvoiced".into()));
    }
    let mut ranked: Vec<(S, &str)> = pool
        .sources()
        .filter_map(|s| {
            mean_distance_to(&s.clips, &target_track, &cfg).map(|d| (d, s.id.as_str()))
        })
        .collect();
    if ranked.is_empty() {
        return Err(Error::InsufficientData(
            "no source speaker with voiced speech".into(),
        ));
    }
    ranked.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.1.cmp(b.1))
    });
    Ok(ranked[0].1.to_string())
}

/// One conversion step: full pitch transfer toward the target's mean f0,
/// then a mel-envelope transfer of the first twelve cepstral coefficients.
/// Keeps the source's duration and rhythm.
pub fn convert_once<S: Scalar>(
    source: &AudioClip<S>,
    target: &AudioClip<S>,
) -> Result<AudioClip<S>> {
    if source.sample_rate != target.sample_rate {
        return Err(Error::InvalidAudio("sample-rate mismatch".into()));
    }
    let cfg = PitchConfig::default();
    let tgt_f0 = estimate_pitch(target, &cfg)?
        .mean_f0()
        .ok_or_else(|| Error::InvalidAudio("target clip is unvoiced".into()))?;
    estimate_pitch(source, &cfg)?
        .mean_f0()
        .ok_or_else(|| Error::InvalidAudio("source clip is unvoiced".into()))?;

    // Full shift toward the target mean, then corrective passes: large
    // vocoder moves land within a few percent, so one or two small follow-up
    // shifts pin the achieved mean to the target.
    let mut shifted = source.clone();
    for _ in 0..3 {
        let Some(cur_f0) = estimate_pitch(&shifted, &cfg)?.mean_f0() else {
            break;
        };
        let shift = semitone_interval(cur_f0, tgt_f0).as_f64().clamp(-25.0, 25.0);
        if shift.abs() < SHIFT_DEADBAND_SEMITONES {
            break;
        }
        shifted = shift_pitch_with_limit(&shifted, shift, 25.0)?;
    }

    // The envelope transfer can sway the tracker's voiced-frame mean, so one
    // last corrective shift runs after it.
    let mut out = transfer_envelope(&shifted, target)?;
    if let Some(cur_f0) = estimate_pitch(&out, &cfg)?.mean_f0() {
        let shift = semitone_interval(cur_f0, tgt_f0).as_f64().clamp(-25.0, 25.0);
        if shift.abs() >= SHIFT_DEADBAND_SEMITONES {
            out = shift_pitch_with_limit(&out, shift, 25.0)?;
        }
    }
    Ok(out)
}

/// Move the source's mean log-mel envelope toward the target's by the exact
/// cepstral-mean difference over coefficients 1..=12, applied as a zero-phase
/// per-frame spectral gain.
fn transfer_envelope<S: Scalar>(
    source: &AudioClip<S>,
    target: &AudioClip<S>,
) -> Result<AudioClip<S>> {
    let mfcc_cfg = MfccConfig::default();
    let pipeline = MfccPipeline::new(&mfcc_cfg, source.sample_rate)?;
    let src_mean = pipeline.compute(&source.samples)?.mean();
    let tgt_mean = pipeline.compute(&target.samples)?.mean();

    // Delta restricted to coefficients 1..=ENVELOPE_COEFFS.
    let mut delta = vec![S::zero(); mfcc_cfg.coefficients];
    for c in 1..=ENVELOPE_COEFFS.min(mfcc_cfg.coefficients - 1) {
        delta[c] = tgt_mean[c] - src_mean[c];
    }
    let log_mel = pipeline.log_mel_from_coeff_delta(&delta);
    let centers = pipeline.mel_centers_hz().to_vec();

    // Amplitude gain per frequency: exp(log-power correction / 2),
    // piecewise-linear between mel centers.
    let half = S::of_f64(0.5);
    let gain_at = move |freq: f64| -> S {
        let corr = if freq <= centers[0] {
            log_mel[0]
        } else if freq >= *centers.last().unwrap() {
            *log_mel.last().unwrap()
        } else {
            let mut j = 0;
            while centers[j + 1] < freq {
                j += 1;
            }
            let t = S::of_f64((freq - centers[j]) / (centers[j + 1] - centers[j]));
            log_mel[j] + (log_mel[j + 1] - log_mel[j]) * t
        };
        (corr * half).exp()
    };

    apply_spectral_gain(source, gain_at)
}

/// Multiply STFT magnitudes by a real frequency-dependent gain (zero-phase),
/// resynthesize by windowed overlap-add.
fn apply_spectral_gain<S: Scalar>(
    clip: &AudioClip<S>,
    gain_at: impl Fn(f64) -> S,
) -> Result<AudioClip<S>> {
    const N: usize = 512;
    const HOP: usize = 128;
    if clip.len() < N {
        return Err(Error::InvalidAudio("clip too short to filter".into()));
    }
    let sr = clip.sample_rate as f64;
    let n_bins = N / 2 + 1;
    let gains: Vec<S> = (0..n_bins).map(|k| gain_at(k as f64 * sr / N as f64)).collect();

    let window: Vec<S> = (0..N)
        .map(|i| S::of_f64(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / N as f64).cos()))
        .collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(N);
    let inv = planner.plan_fft_inverse(N);

    let mut padded = clip.samples.clone();
    let n_frames = (clip.len() + HOP - 1) / HOP + 3;
    padded.resize((n_frames - 1) * HOP + N, S::zero());
    let mut out = vec![S::zero(); padded.len()];
    let mut norm = vec![S::zero(); padded.len()];
    let mut buf = vec![Complex::new(S::zero(), S::zero()); N];
    let scale = S::one() / S::of_usize(N);

    for m in 0..n_frames {
        let base = m * HOP;
        for i in 0..N {
            buf[i] = Complex::new(padded[base + i] * window[i], S::zero());
        }
        fwd.process(&mut buf);
        for k in 0..n_bins {
            buf[k] = buf[k] * gains[k];
        }
        for k in 1..N - n_bins + 1 {
            buf[N - k] = buf[k].conj();
        }
        inv.process(&mut buf);
        for i in 0..N {
            out[base + i] += buf[i].re * scale * window[i];
            norm[base + i] += window[i] * window[i];
        }
    }

    let floor = S::of_f64(1e-9);
    let samples: Vec<S> = out[..clip.len()]
        .iter()
        .zip(&norm)
        .map(|(&y, &w)| y / w.max(floor))
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

/// Generate a parrot set: for each of `n_samples` utterances of the selected
/// source speaker, run `iterations` conversion rounds with the target fixed
/// and the previous output as the new source.
pub fn generate_parrot_set<S: Scalar>(
    target_clip: &AudioClip<S>,
    target_label: &str,
    pool: &SpeakerPool<S>,
    iterations: usize,
    n_samples: usize,
) -> Result<ParrotSet<S>> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be >= 1".into()));
    }
    let source_id = select_source_speaker(target_clip, pool)?;
    let source = pool.speaker(&source_id).expect("selected speaker exists");
    if source.clips.len() < n_samples {
        return Err(Error::InsufficientData(format!(
            "pool exhausted: speaker `{source_id}` has {} utterances, need {n_samples}",
            source.clips.len()
        )));
    }

    let clips: Result<Vec<AudioClip<S>>> = source.clips[..n_samples]
        .par_iter()
        .map(|utt| {
            let mut x = utt.clone();
            for _ in 0..iterations {
                x = convert_once(&x, target_clip)?;
            }
            Ok(x)
        })
        .collect();

    Ok(ParrotSet {
        target_label: target_label.to_string(),
        clips: clips?,
        provenance: ParrotProvenance::StandIn,
        iterations,
    })
}

/// External parrot manifest: a target label plus clip paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParrotManifest {
    pub target: String,
    pub clips: Vec<std::path::PathBuf>,
}

/// Load real VC outputs in place of the stand-in.
pub fn ingest_external_parrots<S: Scalar>(
    manifest_path: impl AsRef<Path>,
    working_rate: u32,
) -> Result<ParrotSet<S>> {
    let path = manifest_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: ParrotManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.clips.is_empty() {
        return Err(Error::Manifest("external parrot manifest is empty".into()));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let clips: Result<Vec<AudioClip<S>>> = manifest
        .clips
        .iter()
        .map(|p| {
            let full = if p.is_absolute() { p.clone() } else { base.join(p) };
            resample(&load_wav(&full)?, working_rate)
        })
        .collect();
    Ok(ParrotSet {
        target_label: manifest.target,
        clips: clips?,
        provenance: ParrotProvenance::External,
        iterations: 0,
    })
}

/// False positive rate of parrot clips against a classifier in the CSI task:
/// FP / (FP + TN) where FP counts clips classified as the target.
pub fn evaluate_fpr<S: Scalar>(
    classifier: &SpeakerModel<S>,
    parrots: &ParrotSet<S>,
    target_label: &str,
) -> Result<f64> {
    if parrots.clips.is_empty() {
        return Err(Error::InsufficientData("empty parrot set".into()));
    }
    if !classifier.labels().iter().any(|l| l == target_label) {
        return Err(Error::UnknownLabel(target_label.to_string()));
    }
    let mut fp = 0usize;
    for clip in &parrots.clips {
        let d = classifier.decide(clip, Task::Csi, &Thresholds::default())?;
        if d.outcome.accepted_as(target_label) {
            fp += 1;
        }
    }
    Ok(fp_ratio(fp, parrots.clips.len() - fp))
}

/// FP / (FP + TN).
pub fn fp_ratio(fp: usize, tn: usize) -> f64 {
    fp as f64 / (fp + tn).max(1) as f64
}

/// Target-vs-rest classification metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl ClassMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let f1 = if recall + precision > 0.0 {
            2.0 * recall * precision / (recall + precision)
        } else {
            0.0
        };
        Self {
            recall,
            precision,
            f1,
        }
    }
}

/// Evaluate a model target-vs-rest over labeled test clips.
pub fn target_vs_rest_metrics<S: Scalar>(
    model: &SpeakerModel<S>,
    test_clips: &[(String, AudioClip<S>)],
    target_label: &str,
) -> Result<ClassMetrics> {
    if !test_clips.iter().any(|(l, _)| l == target_label) {
        return Err(Error::InsufficientData(
            "test set lacks target-speaker clips".into(),
        ));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (truth, clip) in test_clips {
        let predicted_target = model
            .decide(clip, Task::Csi, &Thresholds::default())?
            .outcome
            .accepted_as(target_label);
        match (truth == target_label, predicted_target) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => {}
        }
    }
    Ok(ClassMetrics::from_counts(tp, fp, fn_))
}

/// Compare a parrot-trained model with a ground-truth-trained one on the
/// same labeled test clips.
pub fn compare_pt_gt<S: Scalar>(
    pt_model: &SpeakerModel<S>,
    gt_model: &SpeakerModel<S>,
    test_clips: &[(String, AudioClip<S>)],
    target_label: &str,
) -> Result<(ClassMetrics, ClassMetrics)> {
    Ok((
        target_vs_rest_metrics(pt_model, test_clips, target_label)?,
        target_vs_rest_metrics(gt_model, test_clips, target_label)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::pitch_distance;
    use crate::fixtures::{desk_voices, pool_voices, sine_clip, synth_utterance};

    fn pool_from_voices(n: usize) -> SpeakerPool<f64> {
        let speakers = pool_voices(7, n)
            .iter()
            .map(|v| PoolSpeaker {
                id: v.id.clone(),
                role: Role::SourcePool,
                gender: Some(v.gender),
                clips: (0..3)
                    .map(|c| synth_utterance(v, 900 + c, 0.8, 16_000))
                    .collect(),
                test_clips: vec![],
                knowledge: None,
                transcripts: vec![],
            })
            .collect();
        SpeakerPool {
            working_rate: 16_000,
            speakers,
        }
    }

    #[test]
    fn nearest_pitch_speaker_wins() {
        // Tone pool at known pitches: 180 / 220 / 300 Hz, target at 210.
        let mk = |id: &str, f: f64| PoolSpeaker {
            id: id.into(),
            role: Role::SourcePool,
            gender: None,
            clips: vec![sine_clip::<f64>(f, 0.5, 16_000)],
            test_clips: vec![],
            knowledge: None,
            transcripts: vec![],
        };
        let pool = SpeakerPool {
            working_rate: 16_000,
            speakers: vec![mk("a", 180.0), mk("b", 220.0), mk("c", 300.0)],
        };
        let target = sine_clip::<f64>(210.0, 0.5, 16_000);
        assert_eq!(select_source_speaker(&target, &pool).unwrap(), "b");
    }

    #[test]
    fn own_clip_selects_that_speaker() {
        let pool = pool_from_voices(6);
        let target = pool.speakers[3].clips[0].clone();
        let id = select_source_speaker(&target, &pool).unwrap();
        assert_eq!(id, pool.speakers[3].id);
    }

    #[test]
    fn selection_matches_brute_force_sort_on_large_pool() {
        // 110 tone speakers, exhaustive oracle.
        let speakers: Vec<PoolSpeaker<f64>> = (0..110)
            .map(|i| {
                let f = 80.0 + 3.0 * i as f64;
                PoolSpeaker {
                    id: format!("s{i:03}"),
                    role: Role::SourcePool,
                    gender: None,
                    clips: vec![sine_clip(f, 0.3, 16_000)],
                    test_clips: vec![],
                    knowledge: None,
                    transcripts: vec![],
                }
            })
            .collect();
        let pool = SpeakerPool {
            working_rate: 16_000,
            speakers,
        };
        let target = sine_clip(237.0, 0.3, 16_000);
        let picked = select_source_speaker(&target, &pool).unwrap();

        // Brute-force oracle: measure every speaker, sort.
        let cfg = PitchConfig::default();
        let t_track = estimate_pitch(&target, &cfg).unwrap();
        let mut dists: Vec<(f64, String)> = pool
            .sources()
            .map(|s| {
                let track = estimate_pitch(&s.clips[0], &cfg).unwrap();
                (pitch_distance(&track, &t_track).unwrap(), s.id.clone())
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        assert_eq!(picked, dists[0].1);
    }

    #[test]
    fn selection_invariant_to_pool_order() {
        let mut pool = pool_from_voices(8);
        let target = synth_utterance(&desk_voices(7, 6)[1], 55, 0.8, 16_000);
        let a = select_source_speaker(&target, &pool).unwrap();
        pool.speakers.reverse();
        let b = select_source_speaker(&target, &pool).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn convert_self_is_pitch_noop() {
        let voice = &desk_voices(7, 6)[0];
        let clip: AudioClip<f64> = synth_utterance(voice, 31, 0.8, 16_000);
        let out = convert_once(&clip, &clip).unwrap();
        let cfg = PitchConfig::default();
        let f_in = estimate_pitch(&clip, &cfg).unwrap().mean_f0().unwrap();
        let f_out = estimate_pitch(&out, &cfg).unwrap().mean_f0().unwrap();
        assert!((f_out - f_in).abs() / f_in < 0.02, "{f_in} -> {f_out}");
        assert_eq!(out.len(), clip.len());
    }

    #[test]
    fn convert_transfers_pitch_fully() {
        let source = sine_clip::<f64>(150.0, 0.8, 16_000);
        let target = sine_clip::<f64>(300.0, 0.8, 16_000);
        let out = convert_once(&source, &target).unwrap();
        let f = estimate_pitch(&out, &PitchConfig::default())
            .unwrap()
            .mean_f0()
            .unwrap();
        assert!((f - 300.0).abs() / 300.0 < 0.03, "{f}");
    }

    #[test]
    fn conversion_reduces_pitch_distance_on_corpus() {
        // 4 targets x 5 sources = 20 pairs; strict improvement in >= 95%.
        let targets = desk_voices(7, 4);
        let pool = pool_from_voices(5);
        let cfg = PitchConfig::default();
        let mut improved = 0usize;
        let mut total = 0usize;
        for (i, tv) in targets.iter().enumerate() {
            let target: AudioClip<f64> = synth_utterance(tv, 70 + i as u64, 0.8, 16_000);
            let t_track = estimate_pitch(&target, &cfg).unwrap();
            for s in pool.sources() {
                let src = &s.clips[0];
                let before =
                    pitch_distance(&estimate_pitch(src, &cfg).unwrap(), &t_track).unwrap();
                let out = convert_once(src, &target).unwrap();
                let after =
                    pitch_distance(&estimate_pitch(&out, &cfg).unwrap(), &t_track).unwrap();
                total += 1;
                if after < before {
                    improved += 1;
                }
            }
        }
        assert!(
            improved as f64 / total as f64 >= 0.95,
            "improved {improved}/{total}"
        );
    }

    #[test]
    fn envelope_moves_toward_target() {
        let voices = desk_voices(7, 6);
        let source: AudioClip<f64> = synth_utterance(&voices[0], 11, 0.8, 16_000);
        let target: AudioClip<f64> = synth_utterance(&voices[5], 12, 0.8, 16_000);
        let out = convert_once(&source, &target).unwrap();

        let pipeline = MfccPipeline::new(&MfccConfig::default(), 16_000).unwrap();
        let mean = |c: &AudioClip<f64>| pipeline.compute(&c.samples).unwrap().mean();
        let (ms, mt, mo) = (mean(&source), mean(&target), mean(&out));
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            (1..=ENVELOPE_COEFFS)
                .map(|c| (a[c] - b[c]).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        assert!(
            dist(&mo, &mt) < dist(&ms, &mt),
            "envelope did not move toward target: {} vs {}",
            dist(&mo, &mt),
            dist(&ms, &mt)
        );
    }

    #[test]
    fn single_iteration_single_sample_is_convert_once() {
        let pool = pool_from_voices(4);
        let target: AudioClip<f64> = synth_utterance(&desk_voices(7, 6)[2], 77, 0.8, 16_000);
        let set = generate_parrot_set(&target, "spk2", &pool, 1, 1).unwrap();
        let source_id = select_source_speaker(&target, &pool).unwrap();
        let expected = convert_once(&pool.speaker(&source_id).unwrap().clips[0], &target).unwrap();
        assert_eq!(set.clips.len(), 1);
        assert_eq!(set.clips[0].samples, expected.samples);
        assert_eq!(set.provenance, ParrotProvenance::StandIn);
    }

    #[test]
    fn requested_samples_bounded_by_pool() {
        let pool = pool_from_voices(4);
        let target: AudioClip<f64> = synth_utterance(&desk_voices(7, 6)[2], 78, 0.8, 16_000);
        assert!(generate_parrot_set(&target, "spk2", &pool, 1, 99).is_err());
        let set = generate_parrot_set(&target, "spk2", &pool, 2, 3).unwrap();
        assert_eq!(set.clips.len(), 3);
    }

    #[test]
    fn fpr_is_a_count_ratio() {
        assert!((fp_ratio(66, 6) - 0.9167).abs() < 1e-4);
        assert_eq!(fp_ratio(0, 30), 0.0);
        assert_eq!(fp_ratio(5, 0), 1.0);
    }

    #[test]
    fn class_metrics_formulas() {
        // Recall 0.93, precision 0.96 -> F1 is their harmonic mean 0.9448.
        let m = ClassMetrics {
            recall: 0.93,
            precision: 0.96,
            f1: 2.0 * 0.93 * 0.96 / (0.93 + 0.96),
        };
        assert!((m.f1 - 0.9448).abs() < 1e-4);
        let perfect = ClassMetrics::from_counts(10, 0, 0);
        assert_eq!(perfect.recall, 1.0);
        assert_eq!(perfect.precision, 1.0);
        assert_eq!(perfect.f1, 1.0);
    }

    #[test]
    fn always_target_predictor_has_base_rate_precision() {
        // 10 clips, 3 of the target: recall 1.0, precision 0.3.
        let m = ClassMetrics::from_counts(3, 7, 0);
        assert_eq!(m.recall, 1.0);
        assert!((m.precision - 0.3).abs() < 1e-12);
    }

    #[test]
    fn external_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let clip: AudioClip<f64> = sine_clip(220.0, 0.3, 8_000);
        crate::audio::save_wav(&clip, dir.path().join("p0.wav")).unwrap();
        crate::audio::save_wav(&clip, dir.path().join("p1.wav")).unwrap();
        let manifest = ParrotManifest {
            target: "spk0".into(),
            clips: vec!["p0.wav".into(), "p1.wav".into()],
        };
        let mpath = dir.path().join("parrots.json");
        std::fs::write(&mpath, serde_json::to_string(&manifest).unwrap()).unwrap();
        let set: ParrotSet<f64> = ingest_external_parrots(&mpath, 16_000).unwrap();
        assert_eq!(set.clips.len(), 2);
        assert_eq!(set.provenance, ParrotProvenance::External);
        // Mixed input rates are normalized to the working rate.
        assert!(set.clips.iter().all(|c| c.sample_rate == 16_000));

        let empty = ParrotManifest {
            target: "spk0".into(),
            clips: vec![],
        };
        std::fs::write(&mpath, serde_json::to_string(&empty).unwrap()).unwrap();
        assert!(ingest_external_parrots::<f64>(&mpath, 16_000).is_err());
    }
}
