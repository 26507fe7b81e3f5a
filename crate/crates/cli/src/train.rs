use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use spad_core::data::{load_training_set, mix_datasets, Manifest};
use spad_core::spl::StatsMode;
use spad_core::trainer::{
    checkpoint_dtype, BatchRecord, Checkpoint, EpochSummary, TrainObserver, Trainer,
};
use spad_core::{Error, Result, Scalar};

use crate::config::{require_file, Precision, RunConfig};
use crate::error::CliError;
use crate::provenance::{create_dir, input_entry, tool_version, write_json};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const TIMING_FILE: &str = "timings.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Training manifest (labels, if any, are stripped before training).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Manifest of samples to mix into the training set.
    #[arg(long)]
    pub contaminant: Option<PathBuf>,
    /// Training:contaminant count ratio, e.g. 35; `inf` disables mixing.
    #[arg(long)]
    pub contamination_ratio: Option<f64>,
    /// Train the plain autoencoder (all sample weights 1).
    #[arg(long)]
    pub no_spl: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial threshold range in standard deviations.
    #[arg(long)]
    pub m: Option<f64>,
    /// Per-step shrink rate of the threshold range.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, value_enum)]
    pub stats_mode: Option<StatsModeArg>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Side length images are resized to.
    #[arg(long)]
    pub input_side: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum StatsModeArg {
    Batch,
    Running,
}

pub fn apply(cfg: &mut RunConfig, a: &TrainArgs) {
    if let Some(p) = &a.train {
        cfg.data.train_manifest = Some(p.clone());
    }
    if let Some(p) = &a.contaminant {
        cfg.data.contaminant_manifest = Some(p.clone());
    }
    if let Some(r) = a.contamination_ratio {
        cfg.data.contamination_ratio = Some(r);
    }
    if a.no_spl {
        cfg.train.spl_enabled = false;
    }
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.warmup_epochs {
        t.warmup_epochs = v;
    }
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.m {
        t.m = v;
    }
    if let Some(v) = a.r {
        t.r = v;
    }
    if let Some(v) = a.stats_mode {
        t.stats_mode = match v {
            StatsModeArg::Batch => StatsMode::Batch,
            StatsModeArg::Running => StatsMode::Running,
        };
    }
    if let Some(p) = a.precision {
        cfg.model.precision = p;
    }
    if let Some(s) = a.input_side {
        cfg.data.input_side = s;
    }
}

/// Streams the batch/epoch log and writes one checkpoint per epoch.
struct RunObserver {
    log: BufWriter<File>,
    timings: BufWriter<File>,
    checkpoint_dir: PathBuf,
}

fn write_line(w: &mut BufWriter<File>, value: &serde_json::Value) -> Result<()> {
    writeln!(w, "{value}")
        .and_then(|_| w.flush())
        .map_err(|e| Error::Io {
            context: "writing training log".into(),
            source: e,
        })
}

impl<T: Scalar> TrainObserver<T> for RunObserver {
    fn on_batch(&mut self, record: &BatchRecord<T>) -> Result<()> {
        write_line(&mut self.log, &record.to_json())
    }

    fn on_epoch(&mut self, summary: &EpochSummary, checkpoint: &Checkpoint<T>) -> Result<()> {
        // Wall time goes to its own file so the log stays reproducible.
        let mut line = summary.to_json();
        let wall = line
            .as_object_mut()
            .and_then(|o| o.remove("wall_time_s"))
            .unwrap_or_default();
        write_line(&mut self.log, &line)?;
        write_line(
            &mut self.timings,
            &json!({"epoch": summary.epoch, "wall_time_s": wall}),
        )?;
        let path = self
            .checkpoint_dir
            .join(format!("epoch_{:03}.ckpt", checkpoint.epoch));
        checkpoint.save(&path)?;
        log::info!(
            "epoch {} done: mean loss {:.6}, lr {:.3e}, removed {}",
            summary.epoch + 1,
            summary.mean_loss,
            summary.lr,
            summary.removed
        );
        Ok(())
    }
}

fn open_log(path: &Path, append: bool) -> std::result::Result<BufWriter<File>, CliError> {
    let file = if append {
        OpenOptions::new().create(true).append(true).open(path)
    } else {
        File::create(path)
    };
    file.map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn run(cfg: &mut RunConfig, args: &TrainArgs) -> std::result::Result<(), CliError> {
    apply(cfg, args);
    cfg.validate()?;
    let train_path = require_file("data.train_manifest", &cfg.data.train_manifest)?.to_path_buf();
    let contaminant = match (cfg.data.contamination_ratio, &cfg.data.contaminant_manifest) {
        (Some(r), _) if r.is_infinite() => None,
        (Some(r), Some(_)) => Some((
            require_file("data.contaminant_manifest", &cfg.data.contaminant_manifest)?.to_path_buf(),
            r,
        )),
        (Some(_), None) => {
            return Err(CliError::Config(
                "data.contaminant_manifest: required when data.contamination_ratio is set".into(),
            ))
        }
        (None, _) => None,
    };
    let arch = cfg.arch()?;
    if let Some(ck) = &args.resume {
        let dtype = checkpoint_dtype(ck)?;
        cfg.model.precision = match dtype.as_str() {
            "f64" => Precision::F64,
            _ => Precision::F32,
        };
    }
    let out_dir = cfg.out_dir()?.to_path_buf();
    create_dir(&out_dir.join(CHECKPOINT_DIR))?;

    let primary = Manifest::load(&train_path)?;
    let mut inputs = vec![input_entry(&train_path)?];
    let mixed = match &contaminant {
        Some((path, ratio)) => {
            inputs.push(input_entry(path)?);
            mix_datasets(&primary, &Manifest::load(path)?, *ratio, cfg.seed())?
        }
        None => primary.clone(),
    };
    let unlabeled = mixed.strip_labels();

    std::fs::write(out_dir.join("config.toml"), cfg.to_toml()?)
        .map_err(|e| CliError::io(&out_dir.join("config.toml"), e))?;
    write_json(
        &out_dir.join("provenance_train.json"),
        &json!({
            "command": "train",
            "version": tool_version(),
            "seed": cfg.seed(),
            "precision": cfg.model.precision,
            "config": cfg,
            "arch": arch,
            "inputs": inputs,
            "n_primary": primary.len(),
            "n_contaminant": mixed.len() - primary.len(),
            "resumed_from": args.resume.as_ref().map(|p| p.display().to_string()),
        }),
    )?;

    match cfg.model.precision {
        Precision::F32 => train_with::<f32>(cfg, arch, &unlabeled, &out_dir, args.resume.as_deref()),
        Precision::F64 => train_with::<f64>(cfg, arch, &unlabeled, &out_dir, args.resume.as_deref()),
    }
}

fn train_with<T: Scalar>(
    cfg: &RunConfig,
    arch: spad_core::ArchSpec,
    data: &spad_core::data::UnlabeledManifest,
    out_dir: &Path,
    resume: Option<&Path>,
) -> std::result::Result<(), CliError> {
    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::<T>::load(path)?;
            if ck.arch != arch {
                log::warn!("using the architecture stored in {}", path.display());
            }
            Trainer::resume(ck, cfg.train.clone())?
        }
        None => Trainer::new(cfg.train.clone(), arch)?,
    };
    let data = load_training_set::<T>(data, trainer.model().arch().input_side)?;
    log::info!("training on {} samples ({})", data.len(), T::DTYPE);
    let append = resume.is_some();
    let mut observer = RunObserver {
        log: open_log(&out_dir.join(LOG_FILE), append)?,
        timings: open_log(&out_dir.join(TIMING_FILE), append)?,
        checkpoint_dir: out_dir.join(CHECKPOINT_DIR),
    };
    trainer.run(&data, &mut observer)?;
    let final_path = out_dir.join(FINAL_CHECKPOINT);
    trainer.checkpoint().save(&final_path)?;
    log::info!("final model written to {}", final_path.display());
    Ok(())
}
