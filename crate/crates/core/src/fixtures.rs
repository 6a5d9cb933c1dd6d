//! Deterministic synthetic fixtures: tones, vowel-like speakers, shaped
//! environmental sounds, phoneme transcripts, and the full desk corpus tree.
//!
//! Everything here is a pure function of the seed so fixture trees are
//! byte-identical across runs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{save_wav, AudioClip};
use crate::error::Result;
use crate::manifest::{CarrierEntry, Gender, Manifest, Role, SpeakerEntry, MANIFEST_SCHEMA_VERSION};
use crate::scalar::Scalar;

/// The declared phoneme alphabet for transcripts (ARPABET, 39 phones).
pub const PHONEME_ALPHABET: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH",
];

/// Environmental-sound categories, mirroring the carrier taxonomy.
pub const CARRIER_CATEGORIES: [&str; 5] = ["natural", "things", "human", "animal", "music"];

/// Deterministic seed derivation (SplitMix64 over base XOR salt).
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold a string into a salt for [`mix_seed`].
pub fn str_salt(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Pure sine tone at `amplitude` 0.5.
pub fn sine_clip<S: Scalar>(freq: f64, secs: f64, sample_rate: u32) -> AudioClip<S> {
    let n = (secs * sample_rate as f64).round() as usize;
    let w = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
    AudioClip {
        samples: (0..n).map(|i| S::of_f64(0.5 * (w * i as f64).sin())).collect(),
        sample_rate,
    }
}

/// A synthetic speaker: fundamental plus a three-formant spectral envelope.
#[derive(Debug, Clone)]
pub struct SpeakerVoice {
    pub id: String,
    pub gender: Gender,
    pub f0_base: f64,
    /// (center Hz, bandwidth Hz, gain) triples.
    pub formants: [(f64, f64, f64); 3],
    pub tilt: f64,
}

impl SpeakerVoice {
    /// Deterministic voice for (seed, id, slot). Low slots get male-range
    /// pitch, high slots female-range.
    pub fn derive(seed: u64, id: &str, slot: usize, total: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, str_salt(id)));
        let male = slot < total.div_ceil(2);
        let f0_base = if male {
            rng.gen_range(100.0..165.0)
        } else {
            rng.gen_range(185.0..265.0)
        };
        let formants = [
            (rng.gen_range(350.0..750.0), rng.gen_range(80.0..150.0), 1.0),
            (
                rng.gen_range(1100.0..2100.0),
                rng.gen_range(130.0..220.0),
                rng.gen_range(0.4..0.8),
            ),
            (
                rng.gen_range(2400.0..3100.0),
                rng.gen_range(180.0..300.0),
                rng.gen_range(0.15..0.4),
            ),
        ];
        Self {
            id: id.to_string(),
            gender: if male { Gender::M } else { Gender::F },
            f0_base,
            formants,
            tilt: rng.gen_range(0.75..1.25),
        }
    }

    fn envelope_gain(&self, freq: f64) -> f64 {
        let mut g = 0.03;
        for &(center, bw, gain) in &self.formants {
            let d = freq - center;
            g += gain * bw * bw / (d * d + bw * bw);
        }
        g
    }
}

/// The 6 desk target voices.
pub fn desk_voices(seed: u64, n: usize) -> Vec<SpeakerVoice> {
    (0..n)
        .map(|i| SpeakerVoice::derive(seed, &format!("spk{i}"), i, n))
        .collect()
}

/// Source-pool voices with pitch spread across the whole speech band, so the
/// nearest-pitch selection has something to discriminate.
pub fn pool_voices(seed: u64, n: usize) -> Vec<SpeakerVoice> {
    (0..n)
        .map(|i| {
            let id = format!("src{i:02}");
            let mut v = SpeakerVoice::derive(seed, &id, i, n);
            // Override f0 with an even spread plus a small seeded jitter.
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, str_salt(&id) ^ 0x51));
            let span = 95.0 + 190.0 * i as f64 / (n.max(2) - 1) as f64;
            v.f0_base = span * rng.gen_range(0.98..1.02);
            v
        })
        .collect()
}

/// Synthesize one utterance: a few voiced syllables with pitch drift,
/// formant wobble, raised-cosine envelopes and a low noise floor.
pub fn synth_utterance<S: Scalar>(
    voice: &SpeakerVoice,
    seed: u64,
    secs: f64,
    sample_rate: u32,
) -> AudioClip<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = sample_rate as f64;
    let n_total = (secs * sr).round() as usize;
    let mut samples = vec![0.0f64; n_total];

    let n_syllables = ((secs * 4.0).round() as usize).max(1);
    let mut cursor = (rng.gen_range(0.01..0.04) * sr) as usize;

    for _ in 0..n_syllables {
        if cursor >= n_total {
            break;
        }
        let len = (rng.gen_range(0.13..0.23) * sr) as usize;
        let len = len.min(n_total - cursor);
        if len < 64 {
            break;
        }
        let f0_start = voice.f0_base * rng.gen_range(0.94..1.06);
        let f0_slope = rng.gen_range(-0.08..0.08); // relative drift over the syllable
        let wobble = rng.gen_range(0.96..1.04);
        let n_harm = ((3300.0 / (voice.f0_base * 1.1)) as usize).clamp(3, 30);
        let phases: Vec<f64> = (0..n_harm)
            .map(|_| rng.gen_range(0.0..2.0 * std::f64::consts::PI))
            .collect();
        let gains: Vec<f64> = (1..=n_harm)
            .map(|h| {
                let f = f0_start * h as f64;
                voice.envelope_gain(f * wobble) / (h as f64).powf(voice.tilt)
            })
            .collect();

        let edge = (0.015 * sr) as usize;
        let mut phase = phases;
        for i in 0..len {
            let t = i as f64 / len as f64;
            let f0 = f0_start * (1.0 + f0_slope * t);
            let mut v = 0.0;
            for (h, (p, &g)) in phase.iter_mut().zip(&gains).enumerate() {
                *p += 2.0 * std::f64::consts::PI * f0 * (h + 1) as f64 / sr;
                v += g * p.sin();
            }
            let env = if i < edge {
                0.5 - 0.5 * (std::f64::consts::PI * i as f64 / edge as f64).cos()
            } else if i + edge > len {
                0.5 - 0.5 * (std::f64::consts::PI * (len - i) as f64 / edge as f64).cos()
            } else {
                1.0
            };
            samples[cursor + i] += v * env;
        }
        cursor += len + (rng.gen_range(0.04..0.10) * sr) as usize;
    }

    // Noise floor.
    for s in samples.iter_mut() {
        *s += rng.gen_range(-0.004..0.004);
    }
    let peak = samples.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-9);
    let norm = 0.35 / peak;
    AudioClip {
        samples: samples.into_iter().map(|s| S::of_f64(s * norm)).collect(),
        sample_rate,
    }
}

/// Shaped environmental sound for a (category, variant) pair.
pub fn synth_environmental<S: Scalar>(
    category: &str,
    variant: usize,
    seed: u64,
    secs: f64,
    sample_rate: u32,
) -> AudioClip<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, str_salt(category) ^ variant as u64));
    let sr = sample_rate as f64;
    let n = (secs * sr).round() as usize;
    let v = variant as f64;
    let two_pi = 2.0 * std::f64::consts::PI;

    let mut samples = vec![0.0f64; n];
    match category {
        // Wind/waves: low-passed noise with slow amplitude swell.
        "natural" => {
            let cutoff = 250.0 + 130.0 * v + rng.gen_range(-30.0..30.0);
            let alpha = (-two_pi * cutoff / sr).exp();
            let am_rate = 0.3 + 0.25 * v;
            let mut y = 0.0;
            for (i, s) in samples.iter_mut().enumerate() {
                let x: f64 = rng.gen_range(-1.0..1.0);
                y = alpha * y + (1.0 - alpha) * x;
                let am = 0.6 + 0.4 * (two_pi * am_rate * i as f64 / sr).sin();
                *s = y * am * 8.0;
            }
        }
        // Engines: harmonic buzz plus band noise.
        "things" => {
            let f0 = 42.0 + 13.0 * v + rng.gen_range(-2.0..2.0);
            let n_harm = ((2500.0 / f0) as usize).min(40);
            let phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..two_pi)).collect();
            for (i, s) in samples.iter_mut().enumerate() {
                let t = i as f64 / sr;
                let mut acc = 0.0;
                for (h, p) in phases.iter().enumerate() {
                    let hh = (h + 1) as f64;
                    acc += (two_pi * f0 * hh * t + p).sin() / hh.sqrt();
                }
                *s = acc * 0.25 + rng.gen_range(-0.12..0.12);
            }
        }
        // Whistles: strong tone with vibrato.
        "human" => {
            let f = 900.0 + 190.0 * v + rng.gen_range(-40.0..40.0);
            let vib = rng.gen_range(4.0..6.0);
            let mut phase = 0.0;
            for (i, s) in samples.iter_mut().enumerate() {
                let t = i as f64 / sr;
                let inst = f * (1.0 + 0.015 * (two_pi * vib * t).sin());
                phase += two_pi * inst / sr;
                *s = phase.sin() + rng.gen_range(-0.05..0.05);
            }
        }
        // Chirps: repeating frequency sweeps.
        "animal" => {
            let f_lo = 1000.0 + 160.0 * v;
            let rate = rng.gen_range(4.0..7.0);
            let mut phase = 0.0;
            for (i, s) in samples.iter_mut().enumerate() {
                let t = i as f64 / sr;
                let cycle = (t * rate).fract();
                let active = cycle < 0.6;
                let inst = f_lo * (1.0 + 0.9 * cycle);
                phase += two_pi * inst / sr;
                *s = if active { phase.sin() } else { 0.0 } + rng.gen_range(-0.03..0.03);
            }
        }
        // Chords: decaying triads restruck twice a second.
        "music" => {
            let root = 180.0 + 36.0 * v + rng.gen_range(-8.0..8.0);
            let ratios = [1.0, 1.25, 1.5, 2.0];
            let phases: Vec<f64> = (0..ratios.len()).map(|_| rng.gen_range(0.0..two_pi)).collect();
            for (i, s) in samples.iter_mut().enumerate() {
                let t = i as f64 / sr;
                let strike = (t * 2.0).fract();
                let envelope = (-3.0 * strike).exp();
                let mut acc = 0.0;
                for (r, p) in ratios.iter().zip(&phases) {
                    acc += (two_pi * root * r * t + p).sin();
                }
                *s = acc * envelope * 0.3 + rng.gen_range(-0.01..0.01);
            }
        }
        other => {
            // Unknown categories fall back to plain noise.
            let _ = other;
            for s in samples.iter_mut() {
                *s = rng.gen_range(-1.0..1.0);
            }
        }
    }

    let peak = samples.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-9);
    let norm = 0.35 / peak;
    AudioClip {
        samples: samples.into_iter().map(|s| S::of_f64(s * norm)).collect(),
        sample_rate,
    }
}

/// Seeded phoneme transcript with a per-clip diversity level.
pub fn synth_transcript(seed: u64, secs: f64) -> Vec<&'static str> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_tokens = ((secs * 9.0).round() as usize).max(1);
    let diversity = rng.gen_range(4..=28usize).min(PHONEME_ALPHABET.len());
    let mut pool: Vec<&'static str> = PHONEME_ALPHABET.to_vec();
    // Partial Fisher-Yates: the first `diversity` entries become the pool.
    for i in 0..diversity {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    (0..n_tokens)
        .map(|_| pool[rng.gen_range(0..diversity)])
        .collect()
}

/// Desk-corpus shape knobs.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub sample_rate: u32,
    pub n_targets: usize,
    pub n_pool: usize,
    pub train_clips_per_target: usize,
    pub test_clips_per_target: usize,
    pub clips_per_pool_speaker: usize,
    pub clip_secs: f64,
    pub knowledge_secs: f64,
    pub carriers_per_category: usize,
    pub rating_clips: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            sample_rate: 16_000,
            n_targets: 6,
            n_pool: 10,
            train_clips_per_target: 90,
            test_clips_per_target: 30,
            clips_per_pool_speaker: 12,
            clip_secs: 1.0,
            knowledge_secs: 16.0,
            carriers_per_category: 6,
            rating_clips: 6,
        }
    }
}

/// Generate the full fixture tree under `out_dir` and return its manifest
/// (also written to `out_dir/manifest.json`).
pub fn generate_corpus(cfg: &CorpusConfig, out_dir: &Path) -> Result<Manifest> {
    use std::collections::BTreeMap;
    use std::path::PathBuf;

    let sr = cfg.sample_rate;
    let seed = cfg.seed;
    std::fs::create_dir_all(out_dir).map_err(|e| crate::error::Error::io(out_dir, e))?;
    let ensure = |rel: &str| -> Result<()> {
        let dir = out_dir.join(rel);
        std::fs::create_dir_all(&dir).map_err(|e| crate::error::Error::io(&dir, e))
    };

    // Reference tone fixture.
    ensure("tones")?;
    let tone: AudioClip<f64> = sine_clip(440.0, 1.0, sr);
    save_wav(&tone, out_dir.join("tones/sine440_16k.wav"))?;

    let mut speakers: BTreeMap<String, SpeakerEntry> = BTreeMap::new();

    // Target speakers: train/test clips, transcripts, knowledge sample.
    ensure("transcripts")?;
    for voice in desk_voices(seed, cfg.n_targets) {
        let id = &voice.id;
        ensure(&format!("speakers/{id}"))?;
        let mut clips = Vec::new();
        let mut transcripts = Vec::new();
        for c in 0..cfg.train_clips_per_target {
            let clip_seed = mix_seed(seed, str_salt(id) ^ c as u64);
            let clip: AudioClip<f64> = synth_utterance(&voice, clip_seed, cfg.clip_secs, sr);
            let rel = PathBuf::from(format!("speakers/{id}/train_{c:03}.wav"));
            save_wav(&clip, out_dir.join(&rel))?;
            clips.push(rel);

            let tokens = synth_transcript(mix_seed(clip_seed, 0x7ab5), cfg.clip_secs);
            let trel = PathBuf::from(format!("transcripts/{id}_train_{c:03}.txt"));
            crate::report::write_atomic(
                out_dir.join(&trel),
                format!("{}\n", tokens.join(" ")).as_bytes(),
            )?;
            transcripts.push(trel);
        }
        let mut test_clips = Vec::new();
        for c in 0..cfg.test_clips_per_target {
            let clip_seed = mix_seed(seed, str_salt(id) ^ (0x1000_0000 + c as u64));
            let clip: AudioClip<f64> = synth_utterance(&voice, clip_seed, cfg.clip_secs, sr);
            let rel = PathBuf::from(format!("speakers/{id}/test_{c:03}.wav"));
            save_wav(&clip, out_dir.join(&rel))?;
            test_clips.push(rel);
        }
        let know_seed = mix_seed(seed, str_salt(id) ^ 0x2000_0000);
        let knowledge: AudioClip<f64> = synth_utterance(&voice, know_seed, cfg.knowledge_secs, sr);
        let krel = PathBuf::from(format!("speakers/{id}/knowledge.wav"));
        save_wav(&knowledge, out_dir.join(&krel))?;

        speakers.insert(
            id.clone(),
            SpeakerEntry {
                role: Role::Target,
                gender: Some(voice.gender),
                clips,
                test_clips,
                knowledge: Some(krel),
                transcripts,
            },
        );
    }

    // Source-pool speakers.
    for voice in pool_voices(seed, cfg.n_pool) {
        let id = &voice.id;
        ensure(&format!("pool/{id}"))?;
        let mut clips = Vec::new();
        for c in 0..cfg.clips_per_pool_speaker {
            let clip_seed = mix_seed(seed, str_salt(id) ^ (0x3000_0000 + c as u64));
            let clip: AudioClip<f64> = synth_utterance(&voice, clip_seed, cfg.clip_secs, sr);
            let rel = PathBuf::from(format!("pool/{id}/clip_{c:02}.wav"));
            save_wav(&clip, out_dir.join(&rel))?;
            clips.push(rel);
        }
        speakers.insert(
            id.clone(),
            SpeakerEntry {
                role: Role::SourcePool,
                gender: Some(voice.gender),
                clips,
                test_clips: vec![],
                knowledge: None,
                transcripts: vec![],
            },
        );
    }

    // Environmental carrier bank.
    ensure("carriers")?;
    let mut carriers = Vec::new();
    for cat in CARRIER_CATEGORIES {
        for v in 0..cfg.carriers_per_category {
            let clip: AudioClip<f64> = synth_environmental(cat, v, seed, 1.0, sr);
            let id = format!("{cat}_{v:02}");
            let rel = PathBuf::from(format!("carriers/{id}.wav"));
            save_wav(&clip, out_dir.join(&rel))?;
            carriers.push(CarrierEntry {
                id,
                category: cat.to_string(),
                path: rel,
            });
        }
    }

    // Rating pairs for SRS training, labeled by the documented heuristic.
    let ratings_rel = write_rating_fixtures(cfg, out_dir, &speakers)?;

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        working_rate: sr,
        seed,
        speakers,
        carriers,
        ratings: Some(ratings_rel),
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Build (original, perturbed) pairs across carrier families and SCR levels,
/// score them with the heuristic labeler, and write `ratings.csv`.
fn write_rating_fixtures(
    cfg: &CorpusConfig,
    out_dir: &Path,
    speakers: &std::collections::BTreeMap<String, SpeakerEntry>,
) -> Result<std::path::PathBuf> {
    use crate::audio::{mix_at_scr, shift_pitch, time_stretch, ScrLevel};
    use crate::perception::{extract_quality_features, heuristic_score};

    let dir = out_dir.join("ratings");
    std::fs::create_dir_all(&dir).map_err(|e| crate::error::Error::io(&dir, e))?;

    let originals: Vec<(String, std::path::PathBuf)> = speakers
        .iter()
        .filter(|(_, e)| e.role == Role::Target)
        .flat_map(|(id, e)| e.clips.first().map(|c| (id.clone(), c.clone())))
        .take(cfg.rating_clips)
        .collect();

    let mut lines = vec!["original,perturbed,score".to_string()];
    let mut k = 0usize;
    for (sid, rel) in &originals {
        let clip: AudioClip<f64> = crate::audio::load_wav(out_dir.join(rel))?;
        let mut variants: Vec<(String, AudioClip<f64>)> = Vec::new();

        let noise_seed = mix_seed(cfg.seed, str_salt(sid) ^ 0x4000_0000);
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise = AudioClip::<f64> {
            samples: (0..clip.len())
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect(),
            sample_rate: clip.sample_rate,
        };
        for scr in [0.0, 5.0, 10.0, 20.0, 30.0, 45.0] {
            variants.push((
                format!("noise{scr}"),
                mix_at_scr(&clip, &noise, ScrLevel(scr))?,
            ));
        }
        for (cat, scr) in [("natural", 5.0), ("things", 15.0), ("music", 25.0)] {
            let env: AudioClip<f64> = synth_environmental(cat, k % 6, cfg.seed, 1.0, clip.sample_rate);
            variants.push((format!("{cat}{scr}"), mix_at_scr(&clip, &env, ScrLevel(scr))?));
        }
        for s in [-12.0, -6.0, -2.0, 2.0, 6.0, 12.0] {
            variants.push((format!("pitch{s}"), shift_pitch(&clip, s)?));
        }
        for r in [0.8, 1.25] {
            variants.push((format!("rate{r}"), time_stretch(&clip, r)?));
        }

        for (_, perturbed) in variants {
            let features = extract_quality_features(&clip, &perturbed)?;
            let score = heuristic_score(&features);
            let prel = format!("ratings/pert_{k:03}.wav");
            save_wav(&perturbed, out_dir.join(&prel))?;
            lines.push(format!("{},{},{:.4}", rel.display(), prel, score));
            k += 1;
        }
    }

    let rel = std::path::PathBuf::from("ratings.csv");
    crate::report::write_atomic(out_dir.join(&rel), (lines.join("\n") + "\n").as_bytes())?;
    Ok(rel)
}
