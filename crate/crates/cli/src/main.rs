//! `ptae` — experiment orchestration for the audio attack lab: fixtures,
//! feature extraction, model training, parrot generation, AE search, and
//! evaluation reports.

mod config;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use config::ExperimentConfig;
use ptae_core::attack::{
    grid_env_weight_attack, grid_feature_twist_attack, pgd_attack, AeResult, PgdOptions,
};
use ptae_core::audio::{load_wav, mfcc, save_wav, AudioClip, MfccConfig, PitchConfig};
use ptae_core::manifest::Manifest;
use ptae_core::models::SpeakerModel;
use ptae_core::parrot::ParrotManifest;
use ptae_core::pipeline::{
    ablation_run, attack_originals, build_pt_ensemble, knowledge_sweep, AblationVariant,
    CarrierFamily, DeskLab,
};
use ptae_core::report::{write_atomic, write_json, ReportHeader};
use ptae_core::Sample;

#[derive(Parser)]
#[command(name = "ptae", about = "Desk-scale lab for parrot-trained adversarial audio")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override (propagates into every section).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the deterministic fixture tree (corpus, carriers, ratings).
    GenFixtures,
    /// Extract MFCC or pitch features from a WAV file.
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// mfcc | pitch
        #[arg(long, default_value = "mfcc")]
        kind: String,
    },
    /// Train a model artifact: ubm | neural | srs.
    Train {
        #[arg(long)]
        kind: String,
        /// Architecture preset for neural targets.
        #[arg(long, default_value = "deep-a")]
        arch: String,
    },
    /// MAP-enroll the manifest's target speakers into the saved GMM.
    Enroll,
    /// Generate parrot speech for the configured target.
    GenParrot,
    /// Baseline AE generators: pgd | twist-grid | env-grid.
    GenAe {
        #[arg(long)]
        method: String,
        /// Surrogate model artifact (defaults to the trained neural target).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// The two-stage attack: stage-1 carrier selection plus SPSA weights.
    Attack,
    /// Surrogate-by-target match-rate matrix over environmental AEs.
    EvalTransfer,
    /// Per-carrier-family TPR table against the trained target model.
    EvalTpr,
    /// Knowledge-level sweep (seconds of target speech).
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 4.0, 8.0, 12.0, 16.0])]
        levels: Vec<f64>,
    },
    /// Component-removal ablation table.
    Ablate {
        #[arg(long, value_delimiter = ',')]
        removals: Vec<String>,
    },
    /// Aggregate artifacts, verifying config hashes match.
    Report {
        /// Accept mismatched config hashes.
        #[arg(long)]
        force: bool,
    },
}

/// Artifact wrapper: every emitted JSON embeds the producing config hash.
#[derive(Serialize)]
struct Artifact<T: Serialize> {
    header: ReportHeader,
    body: T,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code_for(&err)
        }
    };
    std::process::exit(code);
}

/// Exit codes: 2 bad config, 3 missing data, 4 internal invariant breach.
fn exit_code_for(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<ptae_core::Error>() {
        return match core {
            ptae_core::Error::InvalidArgument(_) | ptae_core::Error::Serialization(_) => 2,
            ptae_core::Error::Io { .. }
            | ptae_core::Error::Wav { .. }
            | ptae_core::Error::Manifest(_)
            | ptae_core::Error::InsufficientData(_)
            | ptae_core::Error::UnknownLabel(_)
            | ptae_core::Error::InvalidAudio(_) => 3,
            ptae_core::Error::Invariant(_) | ptae_core::Error::BudgetViolation(_) => 4,
        };
    }
    let msg = format!("{err:#}");
    if msg.contains("bad config") || msg.contains("unsupported config") {
        2
    } else if msg.contains("missing artifact") || msg.contains("cannot read") {
        3
    } else {
        1
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    }
    .apply_overrides(cli.seed, cli.out.clone());

    match cli.cmd {
        Cmd::GenFixtures => gen_fixtures(&cfg),
        Cmd::Extract { input, kind } => extract(&cfg, &input, &kind),
        Cmd::Train { kind, arch } => train(&cfg, &kind, &arch),
        Cmd::Enroll => enroll(&cfg),
        Cmd::GenParrot => gen_parrot(&cfg),
        Cmd::GenAe { method, model } => gen_ae(&cfg, &method, model.as_deref()),
        Cmd::Attack => attack(&cfg),
        Cmd::EvalTransfer => eval_transfer(&cfg),
        Cmd::EvalTpr => eval_tpr(&cfg),
        Cmd::Sweep { levels } => sweep(&cfg, &levels),
        Cmd::Ablate { removals } => ablate(&cfg, &removals),
        Cmd::Report { force } => report(&cfg, force),
    }
}

fn header(cfg: &ExperimentConfig, srs_provenance: &str) -> anyhow::Result<ReportHeader> {
    Ok(ReportHeader::new(
        cfg.config_hash()?,
        cfg.seed,
        srs_provenance,
    ))
}

fn load_manifest(cfg: &ExperimentConfig) -> anyhow::Result<Manifest> {
    Manifest::load(&cfg.manifest)
        .with_context(|| format!("missing artifact: manifest {}", cfg.manifest.display()))
}

fn load_lab(cfg: &ExperimentConfig) -> anyhow::Result<DeskLab<Sample>> {
    let manifest = load_manifest(cfg)?;
    Ok(DeskLab::load(&manifest)?)
}

fn model_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.out_dir.join("models").join(name)
}

fn load_model(path: &Path) -> anyhow::Result<SpeakerModel<Sample>> {
    if !path.exists() {
        bail!("missing artifact: model {}", path.display());
    }
    Ok(SpeakerModel::load(path)?)
}

fn gen_fixtures(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let dir = cfg
        .manifest
        .parent()
        .ok_or_else(|| anyhow!("bad config: manifest path has no parent directory"))?;
    let manifest = ptae_core::fixtures::generate_corpus(&cfg.corpus, dir)?;
    println!(
        "fixtures: {} speakers, {} carriers -> {}",
        manifest.speakers.len(),
        manifest.carriers.len(),
        dir.display()
    );
    Ok(())
}

fn extract(cfg: &ExperimentConfig, input: &Path, kind: &str) -> anyhow::Result<()> {
    let clip: AudioClip<Sample> = load_wav(input)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".into());
    let out = cfg.out_dir.join("features");
    let head = header(cfg, "n/a")?;
    match kind {
        "mfcc" => {
            let m = mfcc(&clip, &MfccConfig::default())?;
            write_json(
                out.join(format!("{stem}.mfcc.json")),
                &Artifact { header: head, body: m },
            )?;
        }
        "pitch" => {
            let t = ptae_core::audio::estimate_pitch(&clip, &PitchConfig::default())?;
            write_json(
                out.join(format!("{stem}.pitch.json")),
                &Artifact { header: head, body: t },
            )?;
        }
        other => {
            return Err(anyhow!(ptae_core::Error::InvalidArgument(format!(
                "bad config: unknown feature kind `{other}`"
            ))))
        }
    }
    println!("extracted {kind} features for {}", input.display());
    Ok(())
}

fn train(cfg: &ExperimentConfig, kind: &str, arch: &str) -> anyhow::Result<()> {
    match kind {
        "neural" => {
            let lab = load_lab(cfg)?;
            let model = ptae_core::pipeline::train_gt_neural(
                &lab.pool,
                arch,
                cfg.seed,
                cfg.pipeline.surrogate_epochs,
            )?;
            let path = model_path(cfg, &format!("gt-neural-{arch}.json"));
            model.save(&path)?;
            println!("trained neural target -> {}", path.display());
        }
        "ubm" => {
            let manifest = load_manifest(cfg)?;
            let pool = ptae_core::parrot::SpeakerPool::<Sample>::load(&manifest)?;
            let model = train_gmm_background(&pool, cfg)?;
            let path = model_path(cfg, "gt-gmm.json");
            model.save(&path)?;
            println!("trained UBM -> {}", path.display());
        }
        "srs" => {
            let lab = load_lab(cfg)?;
            let path = model_path(cfg, "srs.json");
            lab.srs.save(&path)?;
            println!("trained SRS ({}) -> {}", lab.srs.provenance, path.display());
        }
        other => {
            return Err(anyhow!(ptae_core::Error::InvalidArgument(format!(
                "bad config: unknown training kind `{other}`"
            ))))
        }
    }
    Ok(())
}

/// UBM-only model (no enrolled speakers yet).
fn train_gmm_background(
    pool: &ptae_core::parrot::SpeakerPool<Sample>,
    cfg: &ExperimentConfig,
) -> anyhow::Result<SpeakerModel<Sample>> {
    let mfcc_cfg = MfccConfig::default();
    let pipeline = ptae_core::audio::MfccPipeline::new(&mfcc_cfg, pool.working_rate)?;
    let mut frames = Vec::new();
    for s in pool.sources() {
        for clip in &s.clips {
            frames.extend(pipeline.compute(&clip.samples)?.rows().map(<[Sample]>::to_vec));
        }
    }
    let (ubm, _) = ptae_core::models::train_ubm(
        &frames,
        &ptae_core::models::UbmTrainOptions {
            components: cfg.pipeline.gmm_components,
            iterations: 15,
            seed: cfg.seed,
        },
    )?;
    Ok(SpeakerModel::Gmm(ptae_core::models::GmmModel {
        ubm,
        speakers: Vec::new(),
        mfcc: mfcc_cfg,
        sample_rate: pool.working_rate,
    }))
}

fn enroll(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let manifest = load_manifest(cfg)?;
    let pool = ptae_core::parrot::SpeakerPool::<Sample>::load(&manifest)?;
    let path = model_path(cfg, "gt-gmm.json");
    let model = load_model(&path)?;
    let SpeakerModel::Gmm(mut gmm) = model else {
        bail!("bad config: {} is not a gmm-ubm model", path.display());
    };
    let pipeline = ptae_core::audio::MfccPipeline::new(&gmm.mfcc, gmm.sample_rate)?;
    for s in pool.targets() {
        if gmm.speakers.iter().any(|(l, _)| l == &s.id) {
            continue;
        }
        let mut frames = Vec::new();
        for clip in &s.clips {
            frames.extend(pipeline.compute(&clip.samples)?.rows().map(<[Sample]>::to_vec));
        }
        gmm.enroll(&s.id, &frames, &ptae_core::models::MapOptions::default())?;
    }
    let enrolled = gmm.speakers.len();
    SpeakerModel::Gmm(gmm).save(&path)?;
    println!("enrolled {enrolled} speakers -> {}", path.display());
    Ok(())
}

fn gen_parrot(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let lab = load_lab(cfg)?;
    let knowledge = ptae_core::pipeline::knowledge_clip(
        &lab.pool,
        &cfg.target,
        cfg.pipeline.knowledge_secs,
    )?;
    let parrots = ptae_core::parrot::generate_parrot_set(
        &knowledge,
        &cfg.target,
        &lab.pool,
        cfg.pipeline.parrot_iterations,
        cfg.pipeline.parrot_samples,
    )?;
    let dir = cfg.out_dir.join("parrots").join(&cfg.target);
    std::fs::create_dir_all(&dir).with_context(|| format!("create {}", dir.display()))?;
    let mut rel_paths = Vec::new();
    for (i, clip) in parrots.clips.iter().enumerate() {
        let name = format!("parrot_{i:02}.wav");
        save_wav(clip, dir.join(&name))?;
        rel_paths.push(PathBuf::from(name));
    }
    let manifest = ParrotManifest {
        target: cfg.target.clone(),
        clips: rel_paths,
    };
    write_json(dir.join("parrots.json"), &manifest)?;
    write_json(
        dir.join("parrots-meta.json"),
        &Artifact {
            header: header(cfg, &lab.srs.provenance)?,
            body: serde_json::json!({
                "target": cfg.target,
                "iterations": parrots.iterations,
                "count": parrots.clips.len(),
                "provenance": "stand-in",
            }),
        },
    )?;
    println!(
        "generated {} parrot clips -> {}",
        parrots.clips.len(),
        dir.display()
    );
    Ok(())
}

/// Everything the AE subcommands persist per example.
#[derive(Serialize)]
struct AeRecord {
    wav: PathBuf,
    original_speaker: String,
    target: String,
    final_loss: f64,
    srs: Option<f64>,
    weights: Option<Vec<f64>>,
    weight_sum: Option<f64>,
    twist: Option<(f64, f64)>,
    evaluations: usize,
}

fn ae_records(
    dir: &Path,
    prefix: &str,
    originals: &[(String, AudioClip<Sample>)],
    aes: &[AeResult<Sample>],
) -> anyhow::Result<Vec<AeRecord>> {
    std::fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
    let mut records = Vec::new();
    for (i, (ae, (orig_id, _))) in aes.iter().zip(originals).enumerate() {
        let name = format!("{prefix}_{i:02}.wav");
        save_wav(&ae.waveform, dir.join(&name))?;
        records.push(AeRecord {
            wav: PathBuf::from(name),
            original_speaker: orig_id.clone(),
            target: ae.target_label.clone(),
            final_loss: ae.final_loss,
            srs: ae.srs,
            weights: ae.weights.as_ref().map(|w| w.gamma.clone()),
            weight_sum: ae.weights.as_ref().map(|w| w.gamma.iter().sum()),
            twist: ae.twist,
            evaluations: ae.evaluations,
        });
    }
    Ok(records)
}

fn gen_ae(cfg: &ExperimentConfig, method: &str, model_arg: Option<&Path>) -> anyhow::Result<()> {
    let lab = load_lab(cfg)?;
    let default_path = model_path(cfg, "gt-neural-deep-a.json");
    let model = load_model(model_arg.unwrap_or(&default_path))?;
    let originals = attack_originals(&lab.pool, &cfg.target, cfg.pipeline.attack_clips);
    if originals.is_empty() {
        return Err(anyhow!(ptae_core::Error::InsufficientData(
            "no clean clips to attack".into()
        )));
    }
    let balance = cfg.pipeline.balance;
    let mut aes = Vec::new();
    for (i, (_, x)) in originals.iter().enumerate() {
        let ae = match method {
            "pgd" => {
                let opts = PgdOptions {
                    epsilon: cfg.pipeline.pgd_epsilon,
                    steps: cfg.pipeline.pgd_steps,
                    step_size: None,
                    seed: ptae_core::fixtures::mix_seed(cfg.seed, i as u64),
                };
                pgd_attack(&model, x, &cfg.target, &opts)?.0
            }
            "twist-grid" => grid_feature_twist_attack(&model, x, &cfg.target, balance, &lab.srs)?,
            "env-grid" => {
                let carriers: Vec<&ptae_core::carriers::Carrier<Sample>> =
                    lab.library.carriers.iter().take(3).collect();
                grid_env_weight_attack(
                    &model,
                    x,
                    &cfg.target,
                    &carriers,
                    cfg.pipeline.epsilon,
                    balance,
                    &lab.srs,
                )?
            }
            other => {
                return Err(anyhow!(ptae_core::Error::InvalidArgument(format!(
                    "bad config: unknown AE method `{other}`"
                ))))
            }
        };
        aes.push(ae);
    }
    let dir = cfg.out_dir.join("aes").join(method);
    let records = ae_records(&dir, method, &originals, &aes)?;
    write_json(
        dir.join("aes.json"),
        &Artifact {
            header: header(cfg, &lab.srs.provenance)?,
            body: records,
        },
    )?;
    println!("{} AEs via {method} -> {}", aes.len(), dir.display());
    Ok(())
}

fn attack(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let srs_path = model_path(cfg, "srs.json");
    if !srs_path.exists() {
        bail!("missing artifact: SRS model {}", srs_path.display());
    }
    let manifest = load_manifest(cfg)?;
    let mut lab = DeskLab::<Sample>::load(&manifest)?;
    lab.srs = ptae_core::perception::SrsModel::load(&srs_path)?;

    let (ensemble, _) = build_pt_ensemble(&lab.pool, &cfg.target, &cfg.pipeline)?;
    let originals = attack_originals(&lab.pool, &cfg.target, cfg.pipeline.attack_clips);
    let aes = ptae_core::pipeline::generate_pt_aes(
        &lab,
        &ensemble,
        &cfg.target,
        &originals,
        CarrierFamily::Environmental,
        &cfg.pipeline,
    )?;
    let dir = cfg.out_dir.join("aes").join("pt");
    let records = ae_records(&dir, "pt", &originals, &aes)?;
    write_json(
        dir.join("attack.json"),
        &Artifact {
            header: header(cfg, &lab.srs.provenance)?,
            body: records,
        },
    )?;
    println!("{} PT-AEs -> {}", aes.len(), dir.display());
    Ok(())
}

fn target_models(cfg: &ExperimentConfig) -> anyhow::Result<Vec<(String, SpeakerModel<Sample>)>> {
    let mut out = Vec::new();
    let models_dir = cfg.out_dir.join("models");
    if !models_dir.exists() {
        bail!("missing artifact: models directory {}", models_dir.display());
    }
    let mut names: Vec<String> = std::fs::read_dir(&models_dir)
        .with_context(|| format!("read {}", models_dir.display()))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with("gt-") && n.ends_with(".json"))
        .collect();
    names.sort();
    for name in names {
        let model = load_model(&models_dir.join(&name))?;
        if model.labels().is_empty() {
            continue; // un-enrolled UBM
        }
        out.push((name.trim_end_matches(".json").to_string(), model));
    }
    if out.is_empty() {
        bail!(
            "missing artifact: no enrolled gt-* models under {}",
            models_dir.display()
        );
    }
    Ok(out)
}

fn eval_transfer(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let lab = load_lab(cfg)?;
    let targets = target_models(cfg)?;
    let (ensemble, _) = build_pt_ensemble(&lab.pool, &cfg.target, &cfg.pipeline)?;
    let originals = attack_originals(&lab.pool, &cfg.target, cfg.pipeline.attack_clips);

    // AEs from the full ensemble; each member then acts as the surrogate
    // side of the match-rate formula.
    let aes = ptae_core::pipeline::generate_pt_aes(
        &lab,
        &ensemble,
        &cfg.target,
        &originals,
        CarrierFamily::Environmental,
        &cfg.pipeline,
    )?;
    let instances: Vec<ptae_core::eval::AeInstance<'_, Sample>> = originals
        .iter()
        .zip(&aes)
        .map(|((_, x), ae)| ptae_core::eval::AeInstance {
            original: x,
            adversarial: &ae.waveform,
        })
        .collect();

    let surrogate_names: Vec<String> = (0..ensemble.len()).map(|i| format!("pt-{i}")).collect();
    let target_names: Vec<String> = targets.iter().map(|(n, _)| n.clone()).collect();
    let mut rates = Vec::new();
    for member in &ensemble.models {
        for (_, target_model) in &targets {
            rates.push(ptae_core::eval::match_rate(member, target_model, &instances)?);
        }
    }
    let matrix = ptae_core::eval::TransferMatrix {
        carrier_type: "environmental".into(),
        surrogates: surrogate_names,
        targets: target_names,
        rates,
    };
    let path = cfg.out_dir.join("reports").join("transfer.json");
    write_json(
        &path,
        &Artifact {
            header: header(cfg, &lab.srs.provenance)?,
            body: &matrix,
        },
    )?;
    println!("transfer matrix -> {}", path.display());
    Ok(())
}

fn eval_tpr(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let lab = load_lab(cfg)?;
    let targets = target_models(cfg)?;
    let (name, target_model) = &targets[0];
    let (ensemble, _) = build_pt_ensemble(&lab.pool, &cfg.target, &cfg.pipeline)?;
    let rows = ptae_core::pipeline::tpr_report(
        &lab,
        &ensemble,
        target_model,
        &cfg.target,
        &cfg.pipeline,
    )?;

    let path = cfg.out_dir.join("reports").join("tpr.json");
    write_json(
        &path,
        &Artifact {
            header: header(cfg, &lab.srs.provenance)?,
            body: serde_json::json!({ "target_model": name, "rows": rows }),
        },
    )?;
    let mut table = String::from("carrier_type\tmatch_rate\tmean_srs\ttpr\n");
    for r in &rows {
        table.push_str(&format!(
            "{}\t{:.4}\t{:.3}\t{:.4}\n",
            r.carrier_type, r.match_rate, r.mean_srs, r.tpr
        ));
    }
    write_atomic(cfg.out_dir.join("reports").join("tpr.txt"), table.as_bytes())?;
    println!("TPR table ({name}) -> {}", path.display());
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, levels: &[f64]) -> anyhow::Result<()> {
    let lab = load_lab(cfg)?;
    let targets = target_models(cfg)?;
    let rows = knowledge_sweep(&lab, &targets[0].1, &cfg.target, levels, &cfg.pipeline)?;
    let path = cfg.out_dir.join("reports").join("sweep.json");
    write_json(
        &path,
        &Artifact {
            header: header(cfg, &lab.srs.provenance)?,
            body: &rows,
        },
    )?;
    println!("knowledge sweep ({} levels) -> {}", rows.len(), path.display());
    Ok(())
}

fn ablate(cfg: &ExperimentConfig, removals: &[String]) -> anyhow::Result<()> {
    let lab = load_lab(cfg)?;
    let targets = target_models(cfg)?;
    let variants: Vec<AblationVariant> = removals
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| AblationVariant::parse(s))
        .collect::<Result<_, _>>()?;
    let rows = ablation_run(&lab, &targets[0].1, &cfg.target, &variants, &cfg.pipeline)?;
    let path = cfg.out_dir.join("reports").join("ablate.json");
    write_json(
        &path,
        &Artifact {
            header: header(cfg, &lab.srs.provenance)?,
            body: &rows,
        },
    )?;
    println!("ablation table ({} rows) -> {}", rows.len(), path.display());
    Ok(())
}

fn report(cfg: &ExperimentConfig, force: bool) -> anyhow::Result<()> {
    let mut hashes = std::collections::BTreeSet::new();
    let mut artifact_list = Vec::new();
    collect_headers(&cfg.out_dir, &mut hashes, &mut artifact_list)?;
    if artifact_list.is_empty() {
        bail!("missing artifact: no artifacts under {}", cfg.out_dir.display());
    }
    if hashes.len() > 1 && !force {
        return Err(anyhow!(ptae_core::Error::InvalidArgument(format!(
            "bad config: artifacts carry {} different config hashes {:?}; rerun or pass --force",
            hashes.len(),
            hashes
        ))));
    }
    let mut text = String::from("artifact\tconfig_hash\tseed\tsrs\n");
    for (path, head) in &artifact_list {
        let rel = path.strip_prefix(&cfg.out_dir).unwrap_or(path);
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            rel.display(),
            head.config_hash,
            head.seed,
            head.srs_provenance
        ));
    }
    let path = cfg.out_dir.join("reports").join("report.txt");
    write_atomic(&path, text.as_bytes())?;
    println!(
        "{} artifacts summarized -> {}",
        artifact_list.len(),
        path.display()
    );
    Ok(())
}

fn collect_headers(
    dir: &Path,
    hashes: &mut std::collections::BTreeSet<String>,
    out: &mut Vec<(PathBuf, ReportHeader)>,
) -> anyhow::Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_headers(&path, hashes, out)?;
        } else if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&path)?;
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) {
                if let Some(h) = value.get("header") {
                    if let Ok(head) = serde_json::from_value::<ReportHeader>(h.clone()) {
                        hashes.insert(head.config_hash.clone());
                        out.push((path, head));
                    }
                }
            }
        }
    }
    Ok(())
}
