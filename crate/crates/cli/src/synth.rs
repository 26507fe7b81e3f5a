use serde_json::json;
use spad_core::data::{synth_generate, SynthConfig};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::provenance::{tool_version, write_json};

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Number of bona fide images to render.
    #[arg(long = "bonafide")]
    pub n_bonafide: Option<usize>,
    /// Number of blended attack images.
    #[arg(long = "attacks")]
    pub n_attacks: Option<usize>,
    /// Share of identities (and attacks) assigned to the training side.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub alpha_min: Option<f64>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    /// Skip the light blur applied to attacks.
    #[arg(long)]
    pub no_smooth: bool,
}

pub fn run(cfg: &mut RunConfig, args: &SynthArgs) -> Result<(), CliError> {
    let seed = cfg.seed();
    let s = &mut cfg.synth;
    if let Some(v) = args.n_bonafide {
        s.n_bonafide = v;
    }
    if let Some(v) = args.n_attacks {
        s.n_attacks = v;
    }
    if let Some(v) = args.train_fraction {
        s.train_fraction = v;
    }
    if let Some(v) = args.alpha_min {
        s.alpha_min = v;
    }
    if let Some(v) = args.alpha_max {
        s.alpha_max = v;
    }
    if args.no_smooth {
        s.smooth = false;
    }
    let synth = SynthConfig {
        n_bonafide: s.n_bonafide,
        n_attacks: s.n_attacks,
        seed,
        train_fraction: s.train_fraction,
        alpha_min: s.alpha_min,
        alpha_max: s.alpha_max,
        smooth: s.smooth,
    };
    synth.validate()?;
    let out_dir = cfg.out_dir()?.to_path_buf();
    let out = synth_generate(&synth, &out_dir)?;
    write_json(
        &out_dir.join("provenance_synth.json"),
        &json!({
            "command": "synth",
            "version": tool_version(),
            "config": synth,
            "counts": {
                "train": out.train.len(),
                "contaminant": out.contaminant.len(),
                "test": out.test.len(),
            },
            "attacks": out.attacks,
        }),
    )?;
    log::info!(
        "wrote {} bona fide and {} attack images to {}",
        synth.n_bonafide,
        synth.n_attacks,
        out_dir.display()
    );
    Ok(())
}
