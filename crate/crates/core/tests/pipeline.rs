//! End-to-end pipeline test on a reduced desk corpus: fixtures, lab load,
//! ground-truth and parrot-trained models, all three carrier families,
//! sweeps, ablation, and serialization.

use ptae_core::attack::SurrogateEnsemble;
use ptae_core::audio::AudioClip;
use ptae_core::eval::asr;
use ptae_core::fixtures::{generate_corpus, CorpusConfig};
use ptae_core::models::{SpeakerModel, Task, Thresholds};
use ptae_core::parrot::{compare_pt_gt, evaluate_fpr};
use ptae_core::pipeline::{
    ablation_run, attack_originals, build_pt_ensemble, knowledge_sweep, run_family, train_gt_gmm,
    train_gt_neural, AblationVariant, CarrierFamily, DeskLab, PipelineConfig,
};

fn small_corpus(dir: &std::path::Path) -> ptae_core::manifest::Manifest {
    let cfg = CorpusConfig {
        seed: 11,
        n_targets: 4,
        n_pool: 6,
        train_clips_per_target: 12,
        test_clips_per_target: 5,
        clips_per_pool_speaker: 12,
        clip_secs: 0.8,
        knowledge_secs: 16.0,
        carriers_per_category: 2,
        rating_clips: 3,
        ..CorpusConfig::default()
    };
    generate_corpus(&cfg, dir).unwrap()
}

fn small_pipeline_cfg() -> PipelineConfig {
    PipelineConfig {
        seed: 11,
        knowledge_secs: 4.0,
        parrot_iterations: 2,
        parrot_samples: 12,
        surrogates: 2,
        surrogate_epochs: 50,
        negatives_per_surrogate: 2,
        candidates: 3,
        spsa_steps: 30,
        spsa_restarts: 2,
        pgd_steps: 40,
        stage1_pitch_step: 13,
        stage1_eval_clips: 2,
        attack_clips: 2,
        gmm_components: 8,
        ..PipelineConfig::default()
    }
}

#[test]
fn end_to_end_pipeline_on_a_small_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path());
    let lab: DeskLab<f64> = DeskLab::load(&manifest).unwrap();
    assert_eq!(lab.library.len(), 10);
    assert!(lab.srs.provenance.starts_with("heuristic"));

    let cfg = small_pipeline_cfg();
    let target = "spk1";

    // Ground-truth models classify held-out clips well.
    let gt = train_gt_neural(&lab.pool, "deep-a", 11, 80).unwrap();
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in lab.pool.targets() {
        for clip in &s.test_clips {
            let d = gt.decide(clip, Task::Csi, &Thresholds::default()).unwrap();
            if d.outcome.accepted_as(&s.id) {
                correct += 1;
            }
            total += 1;
        }
    }
    let accuracy = correct as f64 / total as f64;
    assert!(accuracy >= 0.8, "GT accuracy {accuracy}");

    // GMM family: enrollment clips score their own speaker above others.
    let gmm = train_gt_gmm(&lab.pool, cfg.gmm_components, 11).unwrap();
    let spk0_clip = &lab.pool.speaker("spk0").unwrap().clips[0];
    let own = gmm.score(spk0_clip, "spk0").unwrap();
    let other = gmm.score(spk0_clip, "spk1").unwrap();
    assert!(own > other, "own {own} <= other {other}");

    // Model serialization reproduces scores bit for bit.
    let path = dir.path().join("gt.json");
    gt.save(&path).unwrap();
    let loaded: SpeakerModel<f64> = SpeakerModel::load(&path).unwrap();
    let probe = &lab.pool.speaker(target).unwrap().test_clips[0];
    assert_eq!(gt.scores(probe).unwrap(), loaded.scores(probe).unwrap());

    // Parrot-trained ensemble.
    let (ensemble, parrots) = build_pt_ensemble(&lab.pool, target, &cfg).unwrap();
    assert_eq!(ensemble.len(), 2);
    assert_eq!(parrots.clips.len(), 12);
    let fpr = evaluate_fpr(&gt, &parrots, target).unwrap();
    assert!((0.0..=1.0).contains(&fpr));

    // PT-vs-GT comparison on labeled held-out clips.
    let test_clips: Vec<(String, AudioClip<f64>)> = lab
        .pool
        .targets()
        .flat_map(|s| s.test_clips.iter().map(|c| (s.id.clone(), c.clone())))
        .collect();
    let (pt_metrics, gt_metrics) =
        compare_pt_gt(&ensemble.models[0], &gt, &test_clips, target).unwrap();
    assert!(gt_metrics.f1 > 0.0);
    assert!((0.0..=1.0).contains(&pt_metrics.recall));

    // Environmental-family attack: budget holds on the final waveforms.
    let originals = attack_originals(&lab.pool, target, cfg.attack_clips);
    assert_eq!(originals.len(), 2);
    let (outcome, aes) = run_family(
        &lab,
        &ensemble,
        &gt,
        target,
        &originals,
        CarrierFamily::Environmental,
        &cfg,
    )
    .unwrap();
    assert!((0.0..=1.0).contains(&outcome.asr_csi));
    assert!((0.0..=1.0).contains(&outcome.match_rate));
    assert!((1.0..=7.0).contains(&outcome.mean_srs));
    for ae in &aes {
        let w = ae.weights.as_ref().unwrap();
        w.validate().unwrap();
        assert!(w.gamma.iter().sum::<f64>() <= 0.08 + 1e-9);
    }

    // Noise family (ensemble PGD): Linf budget on the waveform.
    let (noise_outcome, noise_aes) = run_family(
        &lab,
        &ensemble,
        &gt,
        target,
        &originals,
        CarrierFamily::Noise,
        &cfg,
    )
    .unwrap();
    assert!((0.0..=1.0).contains(&noise_outcome.asr_csi));
    for (ae, (_, x)) in noise_aes.iter().zip(&originals) {
        let linf = ae
            .waveform
            .samples
            .iter()
            .zip(&x.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(linf <= 0.05 + 1e-12, "Linf {linf}");
    }

    // Determinism: the same seeded run returns identical waveforms.
    let (_, aes_again) = run_family(
        &lab,
        &ensemble,
        &gt,
        target,
        &originals,
        CarrierFamily::Environmental,
        &cfg,
    )
    .unwrap();
    for (a, b) in aes.iter().zip(&aes_again) {
        assert_eq!(a.waveform.samples, b.waveform.samples);
        assert_eq!(a.final_loss, b.final_loss);
    }

    // Knowledge sweep comes back sorted by level.
    let rows = knowledge_sweep(&lab, &gt, target, &[4.0, 2.0], &cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].level_secs < rows[1].level_secs);

    // Ablation: shared row schema; empty removal set equals the full run.
    let rows = ablation_run(&lab, &gt, target, &[], &cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].variant, "full");
    let rows = ablation_run(&lab, &gt, target, &[AblationVariant::NoPt], &cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].variant, "no-pt");
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.asr_csi));
        assert!((0.0..=1.0).contains(&r.asr_sv));
    }

    // SV attack success via calibrated thresholds behaves like a rate.
    let report = ptae_core::models::calibrate_thresholds(
        &gt,
        &test_clips,
        &lab.pool.speaker("src00").unwrap().clips[..3].to_vec(),
    )
    .unwrap();
    let waveforms: Vec<AudioClip<f64>> = aes.iter().map(|a| a.waveform.clone()).collect();
    let sv_asr = asr(&gt, &waveforms, target, Task::Sv, &report.thresholds).unwrap();
    assert!((0.0..=1.0).contains(&sv_asr));
}

#[test]
fn ensemble_mixes_model_families() {
    // A GMM member participates in the ensemble through softmax scores.
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path());
    let lab: DeskLab<f64> = DeskLab::load(&manifest).unwrap();
    let gmm = train_gt_gmm(&lab.pool, 8, 3).unwrap();
    let neural = train_gt_neural(&lab.pool, "wide-b", 3, 40).unwrap();
    let ensemble = SurrogateEnsemble::new(vec![gmm, neural]).unwrap();
    let clip = &lab.pool.speaker("spk0").unwrap().test_clips[0];
    let probs = ensemble.target_probabilities(clip, "spk0").unwrap();
    assert_eq!(probs.len(), 2);
    for p in probs {
        assert!((0.0..=1.0).contains(&p));
    }
}
