use std::path::{Path, PathBuf};

use serde_json::json;
use spad_core::data::{EvalLabel, Manifest};
use spad_core::eval::{gap_row, plot_gap_curve, plot_roc, score_manifest, EvalReport};
use spad_core::trainer::{checkpoint_dtype, Checkpoint};
use spad_core::{Cae, Scalar};

use crate::config::{require_file, EpochSelection, RunConfig};
use crate::error::CliError;
use crate::provenance::{create_dir, input_entry, tool_version, write_json};
use crate::train::{CHECKPOINT_DIR, FINAL_CHECKPOINT};

pub const SCORES_FILE: &str = "scores.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Labeled test manifest.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// A single checkpoint to evaluate.
    #[arg(long, conflicts_with = "run")]
    pub checkpoint: Option<PathBuf>,
    /// Training output directory; defaults to `--out`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// `last` scores the final model; `all` also scores every epoch for the gap curve.
    #[arg(long, value_enum)]
    pub epochs: Option<EpochSelection>,
    /// Skip the PNG plots.
    #[arg(long)]
    pub no_plots: bool,
}

/// Per-epoch checkpoints of a run directory, in epoch order.
fn epoch_checkpoints(run: &Path) -> Result<Vec<PathBuf>, CliError> {
    let dir = run.join(CHECKPOINT_DIR);
    let entries = std::fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("epoch_") && n.ends_with(".ckpt"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

fn select_checkpoints(cfg: &RunConfig, args: &EvalArgs) -> Result<(Vec<PathBuf>, PathBuf), CliError> {
    if let Some(ck) = &args.checkpoint {
        if !ck.is_file() {
            return Err(CliError::Config(format!("checkpoint {} does not exist", ck.display())));
        }
        return Ok((vec![ck.clone()], ck.clone()));
    }
    let run = match (&args.run, &cfg.out) {
        (Some(r), _) => r.clone(),
        (None, Some(o)) => o.clone(),
        (None, None) => {
            return Err(CliError::Config("eval needs --checkpoint, --run or --out".into()));
        }
    };
    let epochs = epoch_checkpoints(&run)?;
    let final_path = run.join(FINAL_CHECKPOINT);
    let last = if final_path.is_file() {
        final_path
    } else {
        epochs
            .last()
            .cloned()
            .ok_or_else(|| CliError::Config(format!("no checkpoints under {}", run.display())))?
    };
    let selected = match cfg.eval.epochs {
        EpochSelection::All if !epochs.is_empty() => epochs,
        _ => vec![last.clone()],
    };
    Ok((selected, last))
}

pub fn run(cfg: &mut RunConfig, args: &EvalArgs) -> Result<(), CliError> {
    if let Some(t) = &args.test {
        cfg.data.test_manifest = Some(t.clone());
    }
    if let Some(e) = args.epochs {
        cfg.eval.epochs = e;
    }
    if args.no_plots {
        cfg.eval.plots = false;
    }
    let test_path = require_file("data.test_manifest", &cfg.data.test_manifest)?.to_path_buf();
    let test = Manifest::load(&test_path)?;
    let (n_bf, n_atk) = (test.count_label(EvalLabel::BonaFide), test.count_label(EvalLabel::Attack));
    if n_bf == 0 || n_atk == 0 {
        return Err(CliError::Core(spad_core::Error::SingleClass(format!(
            "test manifest {} has {n_bf} bona fide and {n_atk} attack records",
            test_path.display()
        ))));
    }
    let (checkpoints, last) = select_checkpoints(cfg, args)?;
    let out_dir = match (&cfg.out, &args.run) {
        (Some(o), _) => o.clone(),
        (None, Some(r)) => r.clone(),
        (None, None) => last.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    create_dir(&out_dir)?;

    let report = match checkpoint_dtype(&last)?.as_str() {
        "f64" => evaluate::<f64>(&checkpoints, &last, &test, &out_dir, cfg.eval.plots)?,
        _ => evaluate::<f32>(&checkpoints, &last, &test, &out_dir, cfg.eval.plots)?,
    };
    let mut inputs = vec![input_entry(&test_path)?];
    for ck in &checkpoints {
        inputs.push(input_entry(ck)?);
    }
    write_json(
        &out_dir.join("provenance_eval.json"),
        &json!({
            "command": "eval",
            "version": tool_version(),
            "epochs": cfg.eval.epochs,
            "model": input_entry(&last)?,
            "inputs": inputs,
        }),
    )?;
    println!(
        "EER {:.4} at threshold {:.6e} | AUC {:.4} | bona fide mean {:.6e} | attack mean {:.6e} | skipped {}",
        report.eer.eer,
        report.eer.threshold,
        report.auc,
        report.bonafide_mean,
        report.attack_mean,
        report.skipped.len()
    );
    Ok(())
}

fn load_model<T: Scalar>(path: &Path) -> Result<(usize, Cae<T>), CliError> {
    let ck = Checkpoint::<T>::load(path)?;
    Ok((ck.epoch, Cae::from_params(ck.arch, ck.params)?))
}

fn evaluate<T: Scalar>(
    checkpoints: &[PathBuf],
    last: &Path,
    test: &Manifest,
    out_dir: &Path,
    plots: bool,
) -> Result<EvalReport, CliError> {
    let (last_epoch, model) = load_model::<T>(last)?;
    let outcome = score_manifest(&model, test)?;
    if !outcome.skipped.is_empty() {
        log::warn!("{} test samples could not be scored", outcome.skipped.len());
    }
    outcome.scores.save_csv(&out_dir.join(SCORES_FILE))?;
    let mut report = EvalReport::from_scores(&outcome.scores)?;
    report.skipped = outcome.skipped;

    for path in checkpoints {
        let row = if path.as_path() == last {
            gap_row(last_epoch, &outcome.scores)?
        } else {
            let (epoch, m) = load_model::<T>(path)?;
            gap_row(epoch, &score_manifest(&m, test)?.scores)?
        };
        log::info!("epoch {}: gap {:.6e}", row.epoch, row.gap);
        report.gap_curve.push(row);
    }
    report.save_json(&out_dir.join(REPORT_FILE))?;
    if plots {
        plot_roc(&report.roc, &out_dir.join("roc.png"))?;
        plot_gap_curve(&report.gap_curve, &out_dir.join("gap_curve.png"))?;
    }
    Ok(report)
}
