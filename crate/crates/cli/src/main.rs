//! `jointmotion`: synthetic data, training, long-form generation, evaluation
//! and gradient checks.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
//! 3 numerical failure.

mod dataset;
mod runconfig;
mod schema;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jointmotion_core::data::{
    load_features, load_motion, save_motion, synth_dataset, DatasetSplit, LayoutPolicy, MotionSequence,
    SplitAssignment, FPS,
};
use jointmotion_core::diffusion::{write_loss_csv, LossRecord, Schedule, Trainer};
use jointmotion_core::metrics::{
    evaluate_model, score_clips, Autoencoders, FeatureAutoencoder, LandmarkBasis, MetricReport, Scope,
};
use jointmotion_core::network::{network_grad_check, Model};
use jointmotion_core::numcore::{op_grad_checks, Checkpoint, DEFAULT_STEP, DEFAULT_TOLERANCE};
use jointmotion_core::sampler::generate_long;
use jointmotion_core::{Error, ModelConfig, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dataset::{sha256_file, Manifest, SplitCounts, MANIFEST_FORMAT};
use runconfig::RunConfig;
use schema::{Sidecar, TrainSummary};

#[derive(Parser)]
#[command(name = "jointmotion", version, about = "Joint face and body motion diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Run configuration file of key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus and its manifest.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model variant.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory written by `synth`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// joint_adapters, separate, combined or split.
        #[arg(long)]
        variant: Option<String>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate motion for a whole feature file.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Motion file whose last M frames seed the first segment.
        #[arg(long)]
        seed_frames: PathBuf,
        #[arg(long, default_value_t = 0)]
        speaker: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
    },
    /// Train a frozen feature autoencoder for the Fréchet metrics.
    Autoencoder {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// holistic or face.
        #[arg(long)]
        scope: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Omit with --ground-truth.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae_holistic: Option<PathBuf>,
        #[arg(long)]
        ae_face: Option<PathBuf>,
        /// Score the ground truth against itself instead of a model.
        #[arg(long)]
        ground_truth: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every primitive and the full network.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
    },
}

#[derive(Debug)]
enum Failure {
    Check(String),
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) => Failure::Numerical(e.to_string()),
            Error::Unavailable(_) => Failure::Check(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { cfg, out } => synth(&cfg, &out),
        Command::Train {
            cfg,
            data,
            out,
            variant,
            resume,
        } => train(&cfg, &data, &out, variant, resume.as_deref()),
        Command::Generate {
            cfg,
            checkpoint,
            features,
            seed_frames,
            speaker,
            out,
            rng_seed,
        } => generate(&cfg, &checkpoint, &features, &seed_frames, speaker, &out, rng_seed),
        Command::Autoencoder { cfg, data, scope, out } => autoencoder(&cfg, &data, &scope, &out),
        Command::Evaluate {
            cfg,
            checkpoint,
            data,
            ae_holistic,
            ae_face,
            ground_truth,
            out,
        } => evaluate(
            &cfg,
            checkpoint.as_deref(),
            &data,
            ae_holistic.as_deref(),
            ae_face.as_deref(),
            ground_truth,
            &out,
        ),
        Command::Gradcheck { cfg, tolerance, step } => gradcheck(&cfg, tolerance, step),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Check(m) => (1, m),
                Failure::Usage(m) => (2, m),
                Failure::Numerical(m) => (3, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn load_config(args: &ConfigArgs, base: ModelConfig) -> Result<RunConfig, Failure> {
    Ok(RunConfig::load(base, args.config.as_deref(), &args.set)?)
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn synth(args: &ConfigArgs, out: &Path) -> CliResult {
    let cfg = load_config(args, ModelConfig::default())?;
    if cfg.num_sequences == 0 {
        return Err(Failure::Usage("num_sequences must be at least 1".into()));
    }
    create_dir(out)?;
    let seqs = synth_dataset(&cfg.synth())?;
    let split = SplitAssignment::new(seqs.len(), dataset::proportions(), cfg.split_seed)?;
    let clips = DatasetSplit::from_sequences(&seqs, &split, cfg.model.clip_frames, cfg.model.seed_frames)?;
    let p = dataset::proportions();
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        config_hash: cfg.hash(),
        seed: cfg.synth_seed,
        split_seed: cfg.split_seed,
        num_sequences: cfg.num_sequences,
        frames_per_sequence: cfg.frames_per_sequence,
        speakers: cfg.model.speakers,
        feature_dim: cfg.model.audio_dim,
        joints: cfg.model.layout.joints,
        expressions: cfg.model.layout.expressions,
        fps: FPS,
        proportions: [p.train, p.val, p.test],
        split: split.clone(),
        sequence_counts: SplitCounts {
            train: split.train.len(),
            val: split.val.len(),
            test: split.test.len(),
        },
        clip_counts: SplitCounts {
            train: clips.train.len(),
            val: clips.val.len(),
            test: clips.test.len(),
        },
        clip_frames: cfg.model.clip_frames,
        seed_frames: cfg.model.seed_frames,
        sequences: Vec::new(),
    };
    let m = dataset::write_dataset(out, &seqs, &split, manifest)?;
    log::info!(
        "wrote {} sequences to {} (split {}/{}/{}, clips {}/{}/{})",
        m.num_sequences,
        out.display(),
        m.sequence_counts.train,
        m.sequence_counts.val,
        m.sequence_counts.test,
        m.clip_counts.train,
        m.clip_counts.val,
        m.clip_counts.test
    );
    Ok(())
}

fn save_losses(path: &Path, records: &[LossRecord]) -> CliResult {
    let mut w = BufWriter::new(File::create(path)?);
    write_loss_csv(&mut w, records)?;
    w.flush()?;
    Ok(())
}

fn train(args: &ConfigArgs, data: &Path, out: &Path, variant: Option<String>, resume: Option<&Path>) -> CliResult {
    let mut cfg = load_config(args, ModelConfig::default())?;
    if let Some(v) = variant {
        cfg.model.variant = v.parse::<Variant>()?;
    }
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let stored = ModelConfig::from_text(&ckpt.config)?;
            if stored != cfg.model {
                log::warn!("resuming with the model configuration stored in {}", path.display());
            }
            cfg.model = stored;
            Trainer::resume(&ckpt, cfg.train())?
        }
        None => Trainer::new(Model::new(&cfg.model)?, cfg.train())?,
    };
    let (_, split) = dataset::load_split(data, cfg.model.clip_frames, cfg.model.seed_frames)?;
    let ckpt_dir = out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    write_file(&out.join("config.txt"), cfg.to_text())?;
    let params = trainer.model.params.count() as u64;
    log::info!(
        "training {} ({params} parameters) on {} clips from step {} to {}",
        cfg.model.variant,
        split.train.len(),
        trainer.step,
        cfg.train_steps
    );

    let mut streak = 0;
    let mut last_good: Option<PathBuf> = resume.map(Path::to_path_buf);
    let first_new = trainer.history.len();
    while trainer.step < cfg.train_steps as u64 {
        let rec = trainer.step_once(&split.train)?;
        streak = if rec.applied { 0 } else { streak + 1 };
        if streak >= cfg.nan_patience.max(1) {
            save_losses(&out.join("loss.csv"), &trainer.history[first_new..])?;
            let kept = last_good.map_or("none".to_string(), |p| p.display().to_string());
            return Err(Failure::Numerical(format!(
                "{streak} consecutive non-finite losses at step {}; last good checkpoint: {kept}",
                rec.step
            )));
        }
        if cfg.checkpoint_every > 0 && trainer.step % cfg.checkpoint_every == 0 {
            let path = ckpt_dir.join(format!("step_{:06}.ckpt", trainer.step));
            trainer.checkpoint().save(&path)?;
            last_good = Some(path);
        }
        if trainer.step % 100 == 0 {
            log::info!("step {} loss {:.5}", trainer.step, rec.total);
        }
    }
    let last = out.join("last.ckpt");
    trainer.checkpoint().save(&last)?;
    save_losses(&out.join("loss.csv"), &trainer.history[first_new..])?;
    let summary = TrainSummary {
        format: "jointmotion-train".into(),
        variant: cfg.model.variant.to_string(),
        params,
        steps: trainer.step,
        config_hash: cfg.model.hash(),
        final_total: trainer.history.last().map(|r| r.total),
        checkpoint: "last.ckpt".into(),
    };
    write_file(&out.join("train.json"), to_json(&summary))?;
    log::info!("parameters: {params}");
    Ok(())
}

fn generate(
    args: &ConfigArgs,
    checkpoint: &Path,
    features: &Path,
    seed_file: &Path,
    speaker: usize,
    out: &Path,
    rng_seed: u64,
) -> CliResult {
    let (model, _) = Model::load(checkpoint)?;
    let mut cfg = load_config(args, model.config().clone())?;
    // the checkpoint fixes the network; only sampling keys may differ
    cfg.model = ModelConfig {
        variance: cfg.model.variance,
        ..model.config().clone()
    };
    let mc = &cfg.model;
    let audio = load_features(features)?;
    if audio.dim() != mc.audio_dim {
        return Err(Failure::Usage(format!(
            "feature file has {} channels, the checkpoint expects D_a={}",
            audio.dim(),
            mc.audio_dim
        )));
    }
    let m = mc.seed_frames;
    let seed_motion = load_motion(seed_file, LayoutPolicy::Strict(mc.layout)).map_err(|e| {
        Failure::Usage(format!(
            "seed frames: need a motion file with at least M={m} frames ({e})"
        ))
    })?;
    if seed_motion.frames() < m {
        return Err(Failure::Usage(format!(
            "seed frames: need at least M={m} frames, {} has {}",
            seed_file.display(),
            seed_motion.frames()
        )));
    }
    let seed = seed_motion.tensor().slice_rows(seed_motion.frames() - m, m);
    let schedule = Schedule::linear(mc.steps, mc.beta_start, mc.beta_end)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let long = generate_long(&model, &schedule, mc.variance, &seed, audio.tensor(), speaker, &mut rng)?;
    let frames = long.motion.rows();
    let seed_deviation = long.seed_deviation();
    save_motion(out, &MotionSequence::new(mc.layout, FPS, long.motion)?)?;
    let sidecar = Sidecar {
        format: "jointmotion-generation".into(),
        checkpoint_sha256: sha256_file(checkpoint)?,
        config_hash: mc.hash(),
        variant: mc.variant.to_string(),
        features_sha256: sha256_file(features)?,
        seed_frames_sha256: sha256_file(seed_file)?,
        speaker,
        rng_seed,
        variance: mc.variance.as_str().into(),
        frames,
        seed_deviation,
        offsets: long.offsets,
        blends: long.blends,
        output_sha256: sha256_file(out)?,
    };
    write_file(&sidecar_path(out), to_json(&sidecar))?;
    log::info!(
        "wrote {frames} frames to {} (seed deviation {:.4})",
        out.display(),
        sidecar.seed_deviation
    );
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn autoencoder(args: &ConfigArgs, data: &Path, scope: &str, out: &Path) -> CliResult {
    let cfg = load_config(args, ModelConfig::default())?;
    let scope: Scope = scope.parse()?;
    let (m, split) = dataset::load_split(data, cfg.model.clip_frames, cfg.model.seed_frames)?;
    let layout = jointmotion_core::data::MotionLayout {
        joints: m.joints,
        expressions: m.expressions,
    };
    let train: Vec<_> = split.train.iter().map(|c| c.motion.tensor().clone()).collect();
    let val: Vec<_> = split.val.iter().map(|c| c.motion.tensor().clone()).collect();
    let ae = FeatureAutoencoder::train(scope, layout, &train, &val, &cfg.autoencoder())?;
    ae.save(out)?;
    log::info!(
        "{scope} autoencoder: relative error {:.4} after {} steps, hash {}",
        ae.val_relative_mse,
        ae.steps,
        ae.hash()
    );
    Ok(())
}

fn load_autoencoder(path: Option<&Path>, scope: Scope) -> Result<Option<FeatureAutoencoder>, Failure> {
    match path {
        None => {
            log::warn!("no {scope} autoencoder given");
            Ok(None)
        }
        Some(p) if !p.exists() => {
            log::warn!("{scope} autoencoder {} not found", p.display());
            Ok(None)
        }
        Some(p) => Ok(Some(FeatureAutoencoder::load(p, Some(scope))?)),
    }
}

fn evaluate(
    args: &ConfigArgs,
    checkpoint: Option<&Path>,
    data: &Path,
    ae_holistic: Option<&Path>,
    ae_face: Option<&Path>,
    ground_truth: bool,
    out: &Path,
) -> CliResult {
    let model = match (checkpoint, ground_truth) {
        (Some(p), false) => Some(Model::load(p)?.0),
        (None, true) => None,
        (Some(_), true) => return Err(Failure::Usage("--ground-truth takes no checkpoint".into())),
        (None, false) => {
            return Err(Failure::Usage(
                "--checkpoint is required unless --ground-truth is set".into(),
            ))
        }
    };
    let base = model.as_ref().map_or_else(ModelConfig::default, |m| m.config().clone());
    let mut cfg = load_config(args, base.clone())?;
    if model.is_some() {
        cfg.model = ModelConfig {
            variance: cfg.model.variance,
            ..base
        };
    }
    let (_, split) = dataset::load_split(data, cfg.model.clip_frames, cfg.model.seed_frames)?;
    let aes = Autoencoders {
        holistic: load_autoencoder(ae_holistic, Scope::Holistic)?,
        face: load_autoencoder(ae_face, Scope::Face)?,
    };
    let basis = LandmarkBasis::shipped()?;
    let eval = cfg.eval();
    let report = match &model {
        Some(m) => evaluate_model(m, &split.test, &aes, &basis, &eval)?,
        None => {
            let gt: Vec<_> = split.test.iter().map(|c| c.motion.tensor().clone()).collect();
            let mut r = MetricReport::empty("ground_truth", 0, cfg.model.hash(), eval.seed);
            score_clips(&mut r, &split.test, &gt, cfg.model.layout, &aes, &basis, &eval)?;
            r
        }
    };
    for note in &report.notes {
        log::warn!("{note}");
    }
    create_dir(out)?;
    write_file(&out.join("report.json"), report.to_json() + "\n")?;
    write_file(
        &out.join("report.csv"),
        format!("{}\n{}\n", MetricReport::csv_header(), report.csv_row()),
    )?;
    println!("{}", MetricReport::csv_header());
    println!("{}", report.csv_row());
    Ok(())
}

fn gradcheck(args: &ConfigArgs, tolerance: f64, step: f64) -> CliResult {
    let cfg = load_config(args, ModelConfig::gradcheck_toy())?;
    let mut failed = Vec::new();
    for (name, r) in op_grad_checks(step, tolerance, 0)? {
        println!("op {name:<24} max rel err {:.3e}", r.max_rel_err());
        if !r.passed() {
            failed.push(format!("op {name}"));
        }
    }
    let r = network_grad_check(&cfg.model, step, tolerance, 0)?;
    let worst = r.worst().expect("network has parameters");
    println!(
        "network {} ({} tensors): worst {} max rel err {:.3e} (abs {:.3e})",
        cfg.model.variant,
        r.params.len(),
        worst.name,
        worst.max_rel_err,
        worst.max_abs_err
    );
    if !r.passed() {
        failed.push(format!("network parameter {}", worst.name));
    }
    if failed.is_empty() {
        println!("PASS (tolerance {tolerance:e})");
        Ok(())
    } else {
        println!("FAIL (tolerance {tolerance:e})");
        Err(Failure::Check(format!("gradient check failed: {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_sits_next_to_output() {
        assert_eq!(
            sidecar_path(Path::new("/x/out.motion")),
            PathBuf::from("/x/out.motion.json")
        );
    }

    #[test]
    fn error_kinds_map_to_exit_classes() {
        assert!(matches!(
            Failure::from(Error::Numerical("x".into())),
            Failure::Numerical(_)
        ));
        assert!(matches!(Failure::from(Error::Config("x".into())), Failure::Usage(_)));
        assert!(matches!(
            Failure::from(Error::Unavailable("x".into())),
            Failure::Check(_)
        ));
    }
}
