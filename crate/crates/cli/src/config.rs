//! Experiment configuration: a TOML file with flat sections, overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spad_core::model::DEFAULT_INPUT_SIDE;
use spad_core::trainer::TrainConfig;
use spad_core::ArchSpec;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EpochSelection {
    /// Only the final checkpoint.
    #[default]
    Last,
    /// Every per-epoch checkpoint, for the gap curve.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train_manifest: Option<PathBuf>,
    pub contaminant_manifest: Option<PathBuf>,
    /// Bona fide : contaminant count ratio; absent means no contamination.
    pub contamination_ratio: Option<f64>,
    pub test_manifest: Option<PathBuf>,
    pub input_side: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            train_manifest: None,
            contaminant_manifest: None,
            contamination_ratio: None,
            test_manifest: None,
            input_side: DEFAULT_INPUT_SIDE,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub widths: Option<Vec<usize>>,
    pub strides: Option<Vec<usize>>,
    pub precision: Precision,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_bonafide: usize,
    pub n_attacks: usize,
    pub train_fraction: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub smooth: bool,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = spad_core::data::SynthConfig::default();
        Self {
            n_bonafide: 500,
            n_attacks: 250,
            train_fraction: d.train_fraction,
            alpha_min: d.alpha_min,
            alpha_max: d.alpha_max,
            smooth: d.smooth,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub epochs: EpochSelection,
    pub plots: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            epochs: EpochSelection::Last,
            plots: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub synth: SynthSection,
    pub eval: EvalSection,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&body)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.out);
        resolve(base, &mut cfg.data.train_manifest);
        resolve(base, &mut cfg.data.contaminant_manifest);
        resolve(base, &mut cfg.data.test_manifest);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("serializing config: {e}")))
    }

    /// Applies the global `--seed`; the top-level key wins over `train.seed`.
    pub fn apply_seed(&mut self, flag: Option<u64>) {
        if let Some(s) = flag.or(self.seed) {
            self.seed = Some(s);
            self.train.seed = s;
        } else {
            self.seed = Some(self.train.seed);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("out: no output directory given (use --out or `out = ...`)".into()))
    }

    pub fn arch(&self) -> Result<ArchSpec, CliError> {
        let side = self.data.input_side;
        let arch = match (&self.model.widths, &self.model.strides) {
            (Some(w), Some(s)) => ArchSpec::new(side, 3, w.clone(), s.clone())?,
            (Some(w), None) => ArchSpec::with_widths(side, 3, w.clone()),
            (None, Some(_)) => {
                return Err(CliError::Config("model.strides requires model.widths".into()));
            }
            (None, None) => ArchSpec::for_side(side, 3),
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        if let Some(r) = self.data.contamination_ratio {
            if r.is_nan() || r <= 0.0 {
                return Err(CliError::Config(format!(
                    "data.contamination_ratio = {r} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Checks that an optional path key is set and points at an existing file.
pub fn require_file<'a>(key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
    let path = value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("{key}: required but not set")))?;
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "{key}: file {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig {
            seed: Some(3),
            ..RunConfig::default()
        };
        cfg.data.contamination_ratio = Some(35.0);
        cfg.model.widths = Some(vec![8, 16]);
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nlearning_rat = 0.1\n").is_err());
        assert!(toml::from_str::<RunConfig>("colour = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[data]\ninput_side = 64\n").is_ok());
    }

    #[test]
    fn seed_precedence() {
        let mut cfg: RunConfig = toml::from_str("seed = 4\n[train]\nseed = 9\n").unwrap();
        cfg.apply_seed(None);
        assert_eq!((cfg.seed(), cfg.train.seed), (4, 4));
        cfg.apply_seed(Some(11));
        assert_eq!((cfg.seed(), cfg.train.seed), (11, 11));
        let mut cfg: RunConfig = toml::from_str("[train]\nseed = 9\n").unwrap();
        cfg.apply_seed(None);
        assert_eq!(cfg.seed(), 9);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "out = \"run\"\n[data]\ntrain_manifest = \"d/train.csv\"\n").unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.out.unwrap(), dir.path().join("run"));
        assert_eq!(cfg.data.train_manifest.unwrap(), dir.path().join("d/train.csv"));
    }

    #[test]
    fn default_arch_follows_input_side() {
        let mut cfg = RunConfig::default();
        cfg.data.input_side = 64;
        let arch = cfg.arch().unwrap();
        assert_eq!(arch.input_side, 64);
        cfg.model.strides = Some(vec![2]);
        assert!(cfg.arch().is_err());
    }
}
