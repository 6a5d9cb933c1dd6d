//! End-to-end orchestration: build ground-truth targets and parrot-trained
//! surrogate ensembles from a manifest, generate adversarial examples per
//! carrier family, and run the knowledge-level, transfer-trend, and ablation
//! harnesses. Everything is seeded; identical configs give identical
//! artifacts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{
    ensemble_pgd_attack, spsa_attack, stage1_select_candidates,
    AeResult, PgdOptions, SpsaOptions, Stage1Options, SurrogateEnsemble,
};
use crate::audio::AudioClip;
use crate::carriers::{make_feature_twisted, Carrier, CarrierLibrary};
use crate::error::{Error, Result};
use crate::eval::{asr, match_rate, tpr, AeInstance, TprReport};
use crate::fixtures::mix_seed;
use crate::manifest::Manifest;
use crate::models::{
    calibrate_from_scores, train_neural_named, GmmModel, MapOptions, NeuralConfig, SpeakerModel,
    Task, Thresholds, UbmTrainOptions, ARCH_PRESETS,
};
use crate::parrot::{generate_parrot_set, ParrotSet, SpeakerPool};
use crate::perception::{train_srs, ForestConfig, SrsModel};
use crate::scalar::Scalar;

/// Knobs for one experiment run. Defaults carry the attack's reference
/// operating point (500-step SPSA, 50 restarts, K = 50, N = 6, budget 0.08);
/// desk configs shrink the search sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Seconds of target speech the attacker is assumed to know.
    pub knowledge_secs: f64,
    pub parrot_iterations: usize,
    pub parrot_samples: usize,
    /// Surrogate ensemble size N.
    pub surrogates: usize,
    pub surrogate_epochs: usize,
    /// Other-speaker classes mixed into each surrogate.
    pub negatives_per_surrogate: usize,
    /// Stage-1 candidate count K.
    pub candidates: usize,
    /// Carrier weight budget.
    pub epsilon: f64,
    /// PGD Linf budget.
    pub pgd_epsilon: f64,
    pub pgd_steps: usize,
    pub spsa_steps: usize,
    pub spsa_restarts: usize,
    /// Perception balance factor c.
    pub balance: f64,
    pub stage1_pitch_step: usize,
    pub stage1_eval_clips: usize,
    /// Clean clips attacked per run.
    pub attack_clips: usize,
    pub gmm_components: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            knowledge_secs: 8.0,
            parrot_iterations: 5,
            parrot_samples: 12,
            surrogates: 6,
            surrogate_epochs: 80,
            negatives_per_surrogate: 3,
            candidates: 50,
            epsilon: 0.08,
            pgd_epsilon: 0.05,
            pgd_steps: 100,
            spsa_steps: 500,
            spsa_restarts: 50,
            balance: 0.1,
            stage1_pitch_step: 1,
            stage1_eval_clips: 3,
            attack_clips: 6,
            gmm_components: 16,
        }
    }
}

/// Loaded lab state: audio pool, carrier library, SRS model.
pub struct DeskLab<S> {
    pub pool: SpeakerPool<S>,
    pub library: CarrierLibrary<S>,
    pub srs: SrsModel<S>,
    pub working_rate: u32,
}

impl<S: Scalar> DeskLab<S> {
    /// Load everything a run needs. The SRS model trains from the manifest's
    /// rating file (heuristic-labeled by default, human-labeled drop-in).
    pub fn load(manifest: &Manifest) -> Result<Self> {
        let pool = SpeakerPool::load(manifest)?;
        let library = crate::carriers::load_environmental_library(manifest)?;
        let ratings_rel = manifest
            .ratings
            .clone()
            .ok_or_else(|| Error::Manifest("manifest lacks a rating file for SRS".into()))?;
        let records = crate::perception::parse_rating_file(manifest.resolve(&ratings_rel))?;
        let mut srs = train_srs(
            &records,
            &manifest.base_dir,
            manifest.working_rate,
            &ForestConfig {
                seed: manifest.seed,
                ..ForestConfig::default()
            },
        )?;
        srs.provenance = format!("heuristic:{}", ratings_rel.display());
        Ok(Self {
            pool,
            library,
            srs,
            working_rate: manifest.working_rate,
        })
    }
}

/// Labeled training set over the manifest's target speakers.
fn target_training_set<S: Scalar>(pool: &SpeakerPool<S>) -> Vec<(String, AudioClip<S>)> {
    pool.targets()
        .flat_map(|s| s.clips.iter().map(|c| (s.id.clone(), c.clone())))
        .collect()
}

/// Train a ground-truth neural target model from the targets' training clips.
pub fn train_gt_neural<S: Scalar>(
    pool: &SpeakerPool<S>,
    arch: &str,
    seed: u64,
    epochs: usize,
) -> Result<SpeakerModel<S>> {
    let hidden = crate::models::preset_hidden(arch)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown arch preset `{arch}`")))?;
    let cfg = NeuralConfig {
        hidden,
        epochs,
        seed,
        ..NeuralConfig::default()
    };
    let data = target_training_set(pool);
    Ok(SpeakerModel::Neural(train_neural_named(
        &data,
        &cfg,
        pool.working_rate,
        arch,
    )?))
}

/// Train a GMM-UBM target: UBM over the source pool, MAP enrollment of every
/// target speaker.
pub fn train_gt_gmm<S: Scalar>(
    pool: &SpeakerPool<S>,
    components: usize,
    seed: u64,
) -> Result<SpeakerModel<S>> {
    let mfcc_cfg = crate::audio::MfccConfig::default();
    let pipeline = crate::audio::MfccPipeline::new(&mfcc_cfg, pool.working_rate)?;
    let mut background: Vec<Vec<S>> = Vec::new();
    for s in pool.sources() {
        for clip in &s.clips {
            background.extend(pipeline.compute(&clip.samples)?.rows().map(<[S]>::to_vec));
        }
    }
    let (ubm, _) = crate::models::train_ubm(
        &background,
        &UbmTrainOptions {
            components,
            iterations: 15,
            seed,
        },
    )?;
    let mut model = GmmModel {
        ubm,
        speakers: Vec::new(),
        mfcc: mfcc_cfg,
        sample_rate: pool.working_rate,
    };
    for s in pool.targets() {
        let mut frames = Vec::new();
        for clip in &s.clips {
            frames.extend(pipeline.compute(&clip.samples)?.rows().map(<[S]>::to_vec));
        }
        model.enroll(&s.id, &frames, &MapOptions::default())?;
    }
    Ok(SpeakerModel::Gmm(model))
}

/// Knowledge clip for a target at the configured length.
pub fn knowledge_clip<S: Scalar>(
    pool: &SpeakerPool<S>,
    target: &str,
    secs: f64,
) -> Result<AudioClip<S>> {
    let speaker = pool
        .speaker(target)
        .ok_or_else(|| Error::UnknownLabel(target.to_string()))?;
    let knowledge = speaker
        .knowledge
        .as_ref()
        .ok_or_else(|| Error::Manifest(format!("`{target}` has no knowledge clip")))?;
    if knowledge.duration_secs() + 1e-9 < secs {
        return Err(Error::InsufficientData(format!(
            "knowledge clip is {:.1} s, need {secs} s",
            knowledge.duration_secs()
        )));
    }
    Ok(knowledge.head_secs(secs))
}

/// Build the parrot set plus an N-model PT surrogate ensemble. Every member
/// shares the parrot clips but mixes in a different negative-speaker subset,
/// architecture preset, and seed.
pub fn build_pt_ensemble<S: Scalar>(
    pool: &SpeakerPool<S>,
    target: &str,
    cfg: &PipelineConfig,
) -> Result<(SurrogateEnsemble<S>, ParrotSet<S>)> {
    let knowledge = knowledge_clip(pool, target, cfg.knowledge_secs)?;
    let parrots = generate_parrot_set(
        &knowledge,
        target,
        pool,
        cfg.parrot_iterations,
        cfg.parrot_samples,
    )?;
    build_ensemble_from_parrots(pool, &parrots, cfg, None)
}

/// Ensemble construction over an existing clip set for the target class
/// (parrot clips normally; raw knowledge slices in the no-PT ablation).
pub fn build_ensemble_from_parrots<S: Scalar>(
    pool: &SpeakerPool<S>,
    parrots: &ParrotSet<S>,
    cfg: &PipelineConfig,
    arch_override: Option<&str>,
) -> Result<(SurrogateEnsemble<S>, ParrotSet<S>)> {
    let sources: Vec<_> = pool.sources().collect();
    if sources.len() < cfg.negatives_per_surrogate + 1 {
        return Err(Error::InsufficientData(
            "not enough pool speakers for negative classes".into(),
        ));
    }
    let mut models = Vec::with_capacity(cfg.surrogates);
    for n in 0..cfg.surrogates {
        let arch = arch_override.unwrap_or(ARCH_PRESETS[n % ARCH_PRESETS.len()].0);
        let hidden = crate::models::preset_hidden(arch).expect("preset");
        let seed = mix_seed(cfg.seed, 0xE0 + n as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut data: Vec<(String, AudioClip<S>)> = parrots
            .clips
            .iter()
            .map(|c| (parrots.target_label.clone(), c.clone()))
            .collect();
        // Rotate a seeded negative subset per member.
        let mut order: Vec<usize> = (0..sources.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for &si in order.iter().take(cfg.negatives_per_surrogate) {
            let s = sources[si];
            for clip in &s.clips {
                data.push((s.id.clone(), clip.clone()));
            }
        }
        let ncfg = NeuralConfig {
            hidden,
            epochs: cfg.surrogate_epochs,
            seed,
            ..NeuralConfig::default()
        };
        models.push(SpeakerModel::Neural(train_neural_named(
            &data,
            &ncfg,
            pool.working_rate,
            arch,
        )?));
    }
    Ok((SurrogateEnsemble::new(models)?, parrots.clone()))
}

/// Raw-knowledge "parrot" set for the no-PT ablation: the knowledge clip cut
/// into enough 1-second slices.
pub fn raw_knowledge_set<S: Scalar>(
    pool: &SpeakerPool<S>,
    target: &str,
    cfg: &PipelineConfig,
) -> Result<ParrotSet<S>> {
    let speaker = pool
        .speaker(target)
        .ok_or_else(|| Error::UnknownLabel(target.to_string()))?;
    let knowledge = speaker
        .knowledge
        .as_ref()
        .ok_or_else(|| Error::Manifest(format!("`{target}` has no knowledge clip")))?;
    let slice = pool.working_rate as usize; // one second
    let mut clips = Vec::new();
    let mut start = 0usize;
    while clips.len() < cfg.parrot_samples {
        let end = (start + slice).min(knowledge.len());
        if end - start < slice / 2 {
            start = 0; // wrap; short knowledge just repeats slices
            continue;
        }
        clips.push(AudioClip {
            samples: knowledge.samples[start..end].to_vec(),
            sample_rate: knowledge.sample_rate,
        });
        start = end;
        if start >= knowledge.len() {
            start = 0;
        }
    }
    Ok(ParrotSet {
        target_label: target.to_string(),
        clips,
        provenance: crate::parrot::ParrotProvenance::StandIn,
        iterations: 0,
    })
}

/// Clean clips to perturb: test clips of enrolled speakers other than the
/// target, in deterministic manifest order.
pub fn attack_originals<S: Scalar>(
    pool: &SpeakerPool<S>,
    target: &str,
    count: usize,
) -> Vec<(String, AudioClip<S>)> {
    let mut out = Vec::new();
    let mut idx = 0usize;
    loop {
        let mut pushed = false;
        for s in pool.targets() {
            if s.id == target {
                continue;
            }
            if let Some(clip) = s.test_clips.get(idx) {
                out.push((s.id.clone(), clip.clone()));
                pushed = true;
                if out.len() == count {
                    return out;
                }
            }
        }
        if !pushed {
            return out;
        }
        idx += 1;
    }
}

/// The carrier families an attack run can use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierFamily {
    Noise,
    FeatureTwisted,
    Environmental,
}

impl CarrierFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            CarrierFamily::Noise => "noise",
            CarrierFamily::FeatureTwisted => "feature-twisted",
            CarrierFamily::Environmental => "environmental",
        }
    }
}

/// Generate PT-AEs for one carrier family against every original.
/// Noise: ensemble PGD. Feature-twisted: SPSA over pitch-twisted copies of
/// the original. Environmental: stage-1 TPR selection then SPSA.
pub fn generate_pt_aes<S: Scalar>(
    lab: &DeskLab<S>,
    ensemble: &SurrogateEnsemble<S>,
    target: &str,
    originals: &[(String, AudioClip<S>)],
    family: CarrierFamily,
    cfg: &PipelineConfig,
) -> Result<Vec<AeResult<S>>> {
    let mut out = Vec::with_capacity(originals.len());
    for (i, (_, x)) in originals.iter().enumerate() {
        let ae = match family {
            CarrierFamily::Noise => {
                let opts = PgdOptions {
                    epsilon: cfg.pgd_epsilon,
                    steps: cfg.pgd_steps,
                    step_size: None,
                    seed: mix_seed(cfg.seed, 0xA0 + i as u64),
                };
                ensemble_pgd_attack(ensemble, x, target, &opts)?.0
            }
            CarrierFamily::FeatureTwisted => {
                let twists: Vec<Carrier<S>> = (-25..=25i32)
                    .step_by(cfg.stage1_pitch_step.max(1))
                    .filter(|&s| s != 0)
                    .map(|s| make_feature_twisted(x, s as f64, 1.0))
                    .collect::<Result<_>>()?;
                let refs: Vec<&Carrier<S>> = twists.iter().collect();
                let opts = SpsaOptions {
                    epsilon: cfg.epsilon,
                    steps: cfg.spsa_steps,
                    restarts: cfg.spsa_restarts,
                    balance: cfg.balance,
                    seed: mix_seed(cfg.seed, 0xB0 + i as u64),
                };
                spsa_attack(ensemble, x, target, &refs, &lab.srs, &opts)?
            }
            CarrierFamily::Environmental => {
                let eval_set: Vec<AudioClip<S>> = originals
                    .iter()
                    .take(cfg.stage1_eval_clips.max(1))
                    .map(|(_, c)| c.clone())
                    .collect();
                let ranked = stage1_select_candidates(
                    &ensemble.models[0],
                    &lab.library,
                    &eval_set,
                    target,
                    cfg.candidates.min(lab.library.len()),
                    &lab.srs,
                    &Stage1Options {
                        pitch_bound: 25,
                        pitch_step: cfg.stage1_pitch_step,
                        probe_weight: cfg.epsilon,
                    },
                )?;
                let candidates: Vec<Carrier<S>> =
                    ranked.into_iter().map(|r| r.carrier).collect();
                let refs: Vec<&Carrier<S>> = candidates.iter().collect();
                let opts = SpsaOptions {
                    epsilon: cfg.epsilon,
                    steps: cfg.spsa_steps,
                    restarts: cfg.spsa_restarts,
                    balance: cfg.balance,
                    seed: mix_seed(cfg.seed, 0xC0 + i as u64),
                };
                spsa_attack(ensemble, x, target, &refs, &lab.srs, &opts)?
            }
        };
        out.push(ae);
    }
    Ok(out)
}

/// Calibrate SV/OSI thresholds for a target model from the manifest's test
/// clips (genuine = first enrolled label, imposters = source-pool clips).
pub fn calibrate_target_thresholds<S: Scalar>(
    model: &SpeakerModel<S>,
    pool: &SpeakerPool<S>,
) -> Result<Thresholds<S>> {
    let labels = model.labels();
    let first = labels
        .first()
        .ok_or_else(|| Error::InvalidArgument("model has no labels".into()))?;
    let mut genuine_sv = Vec::new();
    let mut imposter_sv = Vec::new();
    let mut genuine_max = Vec::new();
    let mut imposter_max = Vec::new();
    for s in pool.targets() {
        for clip in s.test_clips.iter().take(6) {
            let scores = model.scores(clip)?;
            let max = scores.iter().fold(S::neg_infinity(), |a, &b| a.max(b));
            genuine_max.push(max);
            if &s.id == first {
                genuine_sv.push(scores[0]);
            } else {
                imposter_sv.push(scores[0]);
            }
        }
    }
    for s in pool.sources().take(4) {
        for clip in s.clips.iter().take(3) {
            let scores = model.scores(clip)?;
            imposter_max.push(scores.iter().fold(S::neg_infinity(), |a, &b| a.max(b)));
        }
    }
    let sv = calibrate_from_scores(&genuine_sv, &imposter_sv)?;
    let osi = calibrate_from_scores(&genuine_max, &imposter_max)?;
    Ok(Thresholds {
        osi: Some(osi.threshold),
        sv: Some(sv.threshold),
    })
}

/// Measured outcome of one attack run against one target model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyOutcome {
    pub family: String,
    pub asr_csi: f64,
    pub match_rate: f64,
    pub mean_srs: f64,
    pub tpr: f64,
}

/// Attack one (target label, target model) pair with a family and measure.
pub fn run_family<S: Scalar>(
    lab: &DeskLab<S>,
    ensemble: &SurrogateEnsemble<S>,
    target_model: &SpeakerModel<S>,
    target: &str,
    originals: &[(String, AudioClip<S>)],
    family: CarrierFamily,
    cfg: &PipelineConfig,
) -> Result<(FamilyOutcome, Vec<AeResult<S>>)> {
    let aes = generate_pt_aes(lab, ensemble, target, originals, family, cfg)?;
    let waveforms: Vec<AudioClip<S>> = aes.iter().map(|a| a.waveform.clone()).collect();
    let asr_csi = asr(
        target_model,
        &waveforms,
        target,
        Task::Csi,
        &Thresholds::default(),
    )?;
    let instances: Vec<AeInstance<'_, S>> = originals
        .iter()
        .zip(&waveforms)
        .map(|((_, x), ae)| AeInstance {
            original: x,
            adversarial: ae,
        })
        .collect();
    let m = match_rate(&ensemble.models[0], target_model, &instances)?;
    let extractor_srs: f64 = {
        let mut acc = 0.0;
        let mut n = 0usize;
        for (ae, (_, x)) in aes.iter().zip(originals) {
            let v = match ae.srs {
                Some(s) => s.as_f64(),
                None => crate::perception::srs_score(&lab.srs, x, &ae.waveform)?.as_f64(),
            };
            acc += v;
            n += 1;
        }
        (acc / n.max(1) as f64).clamp(1.0, 7.0)
    };
    Ok((
        FamilyOutcome {
            family: family.as_str().to_string(),
            asr_csi,
            match_rate: m,
            mean_srs: extractor_srs,
            tpr: tpr(m, extractor_srs)?,
        },
        aes,
    ))
}

/// One row of the knowledge-level sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub level_secs: f64,
    pub asr_csi: f64,
    pub match_rate: f64,
    pub mean_srs: f64,
    pub tpr: f64,
}

/// Run the full pipeline once per knowledge level; rows come back sorted by
/// level regardless of input order.
pub fn knowledge_sweep<S: Scalar>(
    lab: &DeskLab<S>,
    target_model: &SpeakerModel<S>,
    target: &str,
    levels: &[f64],
    cfg: &PipelineConfig,
) -> Result<Vec<SweepRow>> {
    let mut levels: Vec<f64> = levels.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    let originals = attack_originals(&lab.pool, target, cfg.attack_clips);
    if originals.is_empty() {
        return Err(Error::InsufficientData("no clean clips to attack".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for &level in &levels {
        let mut level_cfg = cfg.clone();
        level_cfg.knowledge_secs = level;
        let (ensemble, _) = build_pt_ensemble(&lab.pool, target, &level_cfg)?;
        let (outcome, _) = run_family(
            lab,
            &ensemble,
            target_model,
            target,
            &originals,
            CarrierFamily::Environmental,
            &level_cfg,
        )?;
        rows.push(SweepRow {
            level_secs: level,
            asr_csi: outcome.asr_csi,
            match_rate: outcome.match_rate,
            mean_srs: outcome.mean_srs,
            tpr: outcome.tpr,
        });
    }
    Ok(rows)
}

/// Components that the ablation harness can remove or replace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    /// Enroll raw knowledge slices instead of parrot speech.
    NoPt,
    /// Noise-only carrier (ensemble PGD).
    NoiseOnly,
    /// Feature-twist-only carrier.
    FeatureTwistOnly,
    /// Single surrogate instead of the ensemble.
    SingleSurrogate,
    /// All surrogates share one architecture family.
    SameArchEnsemble,
}

impl AblationVariant {
    pub fn parse(tag: &str) -> Result<Self> {
        Ok(match tag {
            "no-pt" => Self::NoPt,
            "noise-only" => Self::NoiseOnly,
            "feature-twist-only" => Self::FeatureTwistOnly,
            "single-surrogate" => Self::SingleSurrogate,
            "same-arch-ensemble" => Self::SameArchEnsemble,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown ablation removal `{other}`"
                )))
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoPt => "no-pt",
            Self::NoiseOnly => "noise-only",
            Self::FeatureTwistOnly => "feature-twist-only",
            Self::SingleSurrogate => "single-surrogate",
            Self::SameArchEnsemble => "same-arch-ensemble",
        }
    }
}

/// One ablation row; every variant shares this schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub asr_csi: f64,
    pub asr_sv: f64,
    pub mean_srs: f64,
}

/// Run the no-removal pipeline plus each requested variant under otherwise
/// identical seeded settings.
pub fn ablation_run<S: Scalar>(
    lab: &DeskLab<S>,
    target_model: &SpeakerModel<S>,
    target: &str,
    removals: &[AblationVariant],
    cfg: &PipelineConfig,
) -> Result<Vec<AblationRow>> {
    let originals = attack_originals(&lab.pool, target, cfg.attack_clips);
    let thresholds = calibrate_target_thresholds(target_model, &lab.pool)?;

    let mut rows = Vec::new();
    let full = ablation_variant_row(lab, target_model, target, &originals, &thresholds, None, cfg)?;
    rows.push(full);
    for &removal in removals {
        rows.push(ablation_variant_row(
            lab,
            target_model,
            target,
            &originals,
            &thresholds,
            Some(removal),
            cfg,
        )?);
    }
    Ok(rows)
}

fn ablation_variant_row<S: Scalar>(
    lab: &DeskLab<S>,
    target_model: &SpeakerModel<S>,
    target: &str,
    originals: &[(String, AudioClip<S>)],
    thresholds: &Thresholds<S>,
    removal: Option<AblationVariant>,
    cfg: &PipelineConfig,
) -> Result<AblationRow> {
    let mut family = CarrierFamily::Environmental;
    let mut run_cfg = cfg.clone();
    let mut arch_override = None;
    let mut raw_knowledge = false;
    match removal {
        None => {}
        Some(AblationVariant::NoPt) => raw_knowledge = true,
        Some(AblationVariant::NoiseOnly) => family = CarrierFamily::Noise,
        Some(AblationVariant::FeatureTwistOnly) => family = CarrierFamily::FeatureTwisted,
        Some(AblationVariant::SingleSurrogate) => run_cfg.surrogates = 1,
        Some(AblationVariant::SameArchEnsemble) => arch_override = Some("deep-a"),
    }

    let parrots = if raw_knowledge {
        raw_knowledge_set(&lab.pool, target, &run_cfg)?
    } else {
        let knowledge = knowledge_clip(&lab.pool, target, run_cfg.knowledge_secs)?;
        generate_parrot_set(
            &knowledge,
            target,
            &lab.pool,
            run_cfg.parrot_iterations,
            run_cfg.parrot_samples,
        )?
    };
    let (ensemble, _) =
        build_ensemble_from_parrots(&lab.pool, &parrots, &run_cfg, arch_override)?;
    let (outcome, aes) = run_family(
        lab,
        &ensemble,
        target_model,
        target,
        originals,
        family,
        &run_cfg,
    )?;
    let waveforms: Vec<AudioClip<S>> = aes.into_iter().map(|a| a.waveform).collect();
    let asr_sv = asr(target_model, &waveforms, target, Task::Sv, thresholds)?;
    Ok(AblationRow {
        variant: removal.map_or("full", AblationVariant::as_str).to_string(),
        asr_csi: outcome.asr_csi,
        asr_sv,
        mean_srs: outcome.mean_srs,
    })
}

/// Per-carrier-type TPR summary against one target model.
pub fn tpr_report<S: Scalar>(
    lab: &DeskLab<S>,
    ensemble: &SurrogateEnsemble<S>,
    target_model: &SpeakerModel<S>,
    target: &str,
    cfg: &PipelineConfig,
) -> Result<Vec<TprReport>> {
    let originals = attack_originals(&lab.pool, target, cfg.attack_clips);
    let mut rows = Vec::new();
    for family in [
        CarrierFamily::Noise,
        CarrierFamily::FeatureTwisted,
        CarrierFamily::Environmental,
    ] {
        let (outcome, _) = run_family(lab, ensemble, target_model, target, &originals, family, cfg)?;
        rows.push(TprReport::new(
            outcome.family,
            outcome.match_rate,
            outcome.mean_srs,
        )?);
    }
    Ok(rows)
}
