use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{ScoreEntry, ScoreSet};
use crate::data::{preprocess_file, preprocessing_pool, EvalLabel, Manifest};
use crate::error::{Error, Result};
use crate::model::Cae;
use crate::scalar::Scalar;
use crate::trainer::Checkpoint;

/// A test record that could not be scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct ScoreOutcome {
    pub scores: ScoreSet,
    pub skipped: Vec<SkippedSample>,
}

/// Scores every labeled record: the score is the per-sample reconstruction
/// MSE. Unreadable images are skipped with a warning; unlabeled records and
/// duplicate ids are errors.
pub fn score_manifest<T: Scalar>(model: &Cae<T>, manifest: &Manifest) -> Result<ScoreOutcome> {
    let mut seen = HashSet::new();
    for r in &manifest.records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
        if r.eval_label.is_none() {
            return Err(Error::invalid(format!("test record {} has no label", r.id)));
        }
    }
    let side = model.arch().input_side;
    let pool = preprocessing_pool()?;
    let results: Vec<std::result::Result<f64, String>> = pool.install(|| {
        manifest
            .records
            .par_iter()
            .map(|r| match preprocess_file::<T>(&r.path, side) {
                Ok(x) => model
                    .sample_loss(&x)
                    .map(|l| l.as_f64())
                    .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            })
            .collect()
    });
    let mut entries = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (r, res) in manifest.records.iter().zip(results) {
        match res {
            Ok(s) if s.is_finite() => entries.push(ScoreEntry {
                id: r.id.clone(),
                score: s,
                label: r.eval_label.expect("checked above"),
            }),
            Ok(s) => {
                log::warn!("skipping {}: non-finite score {s}", r.id);
                skipped.push(SkippedSample {
                    id: r.id.clone(),
                    reason: format!("non-finite score {s}"),
                });
            }
            Err(reason) => {
                log::warn!("skipping {}: {reason}", r.id);
                skipped.push(SkippedSample { id: r.id.clone(), reason });
            }
        }
    }
    Ok(ScoreOutcome {
        scores: ScoreSet::new(entries)?,
        skipped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub epoch: usize,
    pub bonafide_mean: f64,
    pub attack_mean: f64,
    /// `bonafide_mean − attack_mean`.
    pub gap: f64,
}

pub fn gap_row(epoch: usize, scores: &ScoreSet) -> Result<GapRow> {
    let (Some(b), Some(a)) = (scores.mean_of(EvalLabel::BonaFide), scores.mean_of(EvalLabel::Attack)) else {
        return Err(Error::SingleClass(format!("gap at epoch {epoch}")));
    };
    Ok(GapRow {
        epoch,
        bonafide_mean: b,
        attack_mean: a,
        gap: b - a,
    })
}

/// Class means of the test scores after every checkpointed epoch.
pub fn gap_curve<T: Scalar>(checkpoints: &[Checkpoint<T>], test: &Manifest) -> Result<Vec<GapRow>> {
    if checkpoints.is_empty() {
        return Err(Error::invalid("gap curve needs at least one checkpoint"));
    }
    checkpoints
        .iter()
        .map(|ck| {
            let model = Cae::from_params(ck.arch.clone(), ck.params.clone())?;
            let out = score_manifest(&model, test)?;
            gap_row(ck.epoch, &out.scores)
        })
        .collect()
}
