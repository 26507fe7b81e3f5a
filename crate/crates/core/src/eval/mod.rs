//! Scoring, error rates and evaluation reports.

mod metrics;
mod plot;
mod score;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use metrics::{
    apcer_at_bpcer, apcer_bpcer_at, bpcer_at_apcer, compute_eer, roc_auc, roc_points, Eer, RocPoint,
    ScoreEntry, ScoreSet, POLARITY,
};
pub use plot::{plot_gap_curve, plot_roc};
pub use score::{gap_curve, gap_row, score_manifest, GapRow, ScoreOutcome, SkippedSample};

use crate::data::EvalLabel;
use crate::error::{Error, Result};

/// Targets used for the operating-point tables.
pub const OPERATING_TARGETS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target: f64,
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub polarity: String,
    pub n_bonafide: usize,
    pub n_attack: usize,
    pub eer: Eer,
    pub auc: f64,
    pub bonafide_mean: f64,
    pub attack_mean: f64,
    pub bpcer_at_apcer: Vec<OperatingPoint>,
    pub apcer_at_bpcer: Vec<OperatingPoint>,
    pub roc: Vec<RocPoint>,
    #[serde(default)]
    pub gap_curve: Vec<GapRow>,
    #[serde(default)]
    pub skipped: Vec<SkippedSample>,
}

impl EvalReport {
    pub fn from_scores(scores: &ScoreSet) -> Result<Self> {
        let eer = compute_eer(scores)?;
        let roc = roc_points(scores)?;
        let table = |f: fn(&[RocPoint], f64) -> Option<f64>| {
            OPERATING_TARGETS
                .iter()
                .map(|&target| OperatingPoint {
                    target,
                    value: f(&roc, target),
                })
                .collect::<Vec<_>>()
        };
        Ok(Self {
            polarity: POLARITY.to_string(),
            n_bonafide: scores.count(EvalLabel::BonaFide),
            n_attack: scores.count(EvalLabel::Attack),
            auc: roc_auc(&roc),
            bonafide_mean: scores.mean_of(EvalLabel::BonaFide).unwrap_or(f64::NAN),
            attack_mean: scores.mean_of(EvalLabel::Attack).unwrap_or(f64::NAN),
            bpcer_at_apcer: table(bpcer_at_apcer),
            apcer_at_bpcer: table(apcer_at_bpcer),
            eer,
            roc,
            gap_curve: Vec::new(),
            skipped: Vec::new(),
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&body)?)
    }
}
