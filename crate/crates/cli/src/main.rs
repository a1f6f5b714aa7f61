use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gdsr_core::collision::{CollisionConfig, CollisionResolver};
use gdsr_core::datagen::{frame_dir, gen_sequence, load_dataset, save_dataset, SceneConfig};
use gdsr_core::losses::{atlas_bounds, crop_patches, rasterize_normal_patch, to_ppm, PixelCoverage};
use gdsr_core::mesh::UvLocator;
use gdsr_core::model::GdsrModel;
use gdsr_core::pipeline::{evaluate, rollout, write_eval_csv, HistoryMode, TrainConfig, Trainer};
use gdsr_core::CoreError;
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

const COARSE_PRED: &str = "coarse.obj";
const FINE_PRED: &str = "fine.obj";

#[derive(Parser)]
#[command(name = "gdsr", version, about = "Garment dynamic super-resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "data")]
        data: PathBuf,
    },
    /// Predict a sequence with a trained checkpoint.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        /// Number of frames; all frames when omitted.
        #[arg(long)]
        frames: Option<usize>,
        /// Feed dataset targets as the corrected history instead of predictions.
        #[arg(long)]
        teacher_forced: bool,
        #[arg(long)]
        no_collision: bool,
    },
    /// Score predictions against a dataset and write a CSV report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Write ground-truth normal patches of one frame as PPM images.
    DumpPatches {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn required<'a>(out: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    out.as_deref().with_context(|| format!("{what} needs --out"))
}

fn gen_data(common: &Common) -> Result<()> {
    let mut cfg: SceneConfig = read_json(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = required(&common.out, "gen-data")?;
    let data = gen_sequence(&cfg)?;
    save_dataset(&data, out)?;
    info!("wrote {} frames to {}", data.len(), out.display());
    Ok(())
}

fn train(common: &Common, data_dir: &Path) -> Result<()> {
    let mut cfg: TrainConfig = read_json(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = required(&common.out, "train")?;
    let data = load_dataset(data_dir)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("train.json"), serde_json::to_string_pretty(&cfg)?)?;
    let every = cfg.checkpoint_every;
    let mut trainer = Trainer::new(&data, cfg)?;
    trainer.run(|epoch, model| {
        info!("epoch {epoch} done");
        if every > 0 && (epoch + 1) % every == 0 {
            model.save(&out.join(format!("epoch_{:04}", epoch + 1)))?;
        }
        Ok(())
    })?;
    trainer.model.save(&out.join("final"))?;
    trainer.save_log(&out.join("loss.csv"))?;
    info!("wrote checkpoint {}", out.join("final").display());
    Ok(())
}

fn run_rollout(
    common: &Common,
    ckpt: &Path,
    data_dir: &Path,
    frames: Option<usize>,
    teacher_forced: bool,
    no_collision: bool,
) -> Result<()> {
    let cfg: TrainConfig = read_json(common.config.as_deref())?;
    let out = required(&common.out, "rollout")?;
    let model = GdsrModel::load(ckpt)?;
    let data = load_dataset(data_dir)?;
    let frames = frames.unwrap_or(data.len());
    let feat = cfg.features;
    let collision = CollisionConfig {
        sigma_b: feat.sigma_b,
        sigma_l: feat.sigma_l,
        ..CollisionConfig::default()
    };
    let resolver = if no_collision {
        None
    } else {
        Some(CollisionResolver::new(&data.coarse, &data.fine, collision)?)
    };
    let mode = if teacher_forced {
        HistoryMode::TeacherForced
    } else {
        HistoryMode::Autoregressive
    };
    let preds = rollout(&model, &data, frames, &feat, resolver.as_ref(), mode)?;
    for (t, p) in preds.iter().enumerate() {
        let dir = frame_dir(out, t);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        data.coarse.save_positions(&dir.join(COARSE_PRED), &p.chat)?;
        data.fine.save_positions(&dir.join(FINE_PRED), &p.fine)?;
    }
    info!("wrote {} predicted frames to {}", preds.len(), out.display());
    Ok(())
}

fn run_eval(common: &Common, pred: &Path, gt: &Path) -> Result<()> {
    let data = load_dataset(gt)?;
    let mut fine = Vec::new();
    while frame_dir(pred, fine.len()).join(FINE_PRED).exists() {
        fine.push(data.fine.load_positions(&frame_dir(pred, fine.len()).join(FINE_PRED))?);
    }
    if fine.is_empty() {
        bail!(CoreError::Config(format!("no predicted frames in {}", pred.display())));
    }
    let report = evaluate(&data, &fine)?;
    let mut buf = Vec::new();
    write_eval_csv(&report, &mut buf)?;
    match &common.out {
        Some(path) => std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{}", String::from_utf8(buf)?),
    }
    Ok(())
}

fn dump_patches(common: &Common, data_dir: &Path, frame: usize, count: usize) -> Result<()> {
    let cfg: TrainConfig = read_json(common.config.as_deref())?;
    let out = required(&common.out, "dump-patches")?;
    let data = load_dataset(data_dir)?;
    let Some(f) = data.frames.get(frame) else {
        bail!(CoreError::Config(format!("frame {frame} out of range ({} frames)", data.len())));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed.unwrap_or(cfg.seed));
    let locator = UvLocator::new(&data.fine);
    let windows = crop_patches(atlas_bounds(&data.fine), count, cfg.patch_size, &mut rng, |w| {
        PixelCoverage::new(&data.fine, &locator, w, 16).fraction()
    })?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (i, w) in windows.into_iter().enumerate() {
        let patch = rasterize_normal_patch(&data.fine, &f.fine_gt, w, cfg.patch_resolution);
        let path = out.join(format!("patch_{i:02}.ppm"));
        std::fs::write(&path, to_ppm(&patch)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common } => gen_data(&common),
        Command::Train { common, data } => train(&common, &data),
        Command::Rollout {
            common,
            ckpt,
            data,
            frames,
            teacher_forced,
            no_collision,
        } => run_rollout(&common, &ckpt, &data, frames, teacher_forced, no_collision),
        Command::Eval { common, pred, gt } => run_eval(&common, &pred, &gt),
        Command::DumpPatches {
            common,
            data,
            frame,
            count,
        } => dump_patches(&common, &data, frame, count),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(e) if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
