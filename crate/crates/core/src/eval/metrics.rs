//! Attack/bona fide error rates, equal error rate and ROC.
//!
//! Scores are reconstruction errors. Attacks reconstruct better, so the
//! decision rule is: attack iff `score < t`; a score equal to the threshold
//! lands on the bona fide side.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::EvalLabel;
use crate::error::{Error, Result};

pub const POLARITY: &str = "higher score = more bona-fide-like; attack iff score < threshold";

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreEntry {
    pub id: String,
    pub score: f64,
    pub label: EvalLabel,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreSet {
    pub entries: Vec<ScoreEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub apcer: f64,
    /// `1 − BPCER`.
    pub tpr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
    pub apcer: f64,
    pub bpcer: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    id: String,
    score: f64,
    label: String,
}

impl ScoreSet {
    pub fn new(entries: Vec<ScoreEntry>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !e.score.is_finite()) {
            return Err(Error::NonFinite(format!("score of {} is {}", e.id, e.score)));
        }
        Ok(Self { entries })
    }

    /// Builds a set from raw class score lists, ids `bf_i` / `atk_i`.
    pub fn from_classes(bonafide: &[f64], attack: &[f64]) -> Result<Self> {
        let mut entries = Vec::with_capacity(bonafide.len() + attack.len());
        for (i, &s) in bonafide.iter().enumerate() {
            entries.push(ScoreEntry {
                id: format!("bf_{i}"),
                score: s,
                label: EvalLabel::BonaFide,
            });
        }
        for (i, &s) in attack.iter().enumerate() {
            entries.push(ScoreEntry {
                id: format!("atk_{i}"),
                score: s,
                label: EvalLabel::Attack,
            });
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores_of(&self, label: EvalLabel) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.score)
            .collect()
    }

    pub fn count(&self, label: EvalLabel) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn mean_of(&self, label: EvalLabel) -> Option<f64> {
        let s = self.scores_of(label);
        if s.is_empty() {
            None
        } else {
            Some(s.iter().sum::<f64>() / s.len() as f64)
        }
    }

    fn check_classes(&self) -> Result<(usize, usize)> {
        let na = self.count(EvalLabel::Attack);
        let nb = self.count(EvalLabel::BonaFide);
        if na == 0 || nb == 0 {
            return Err(Error::SingleClass(format!(
                "{na} attack and {nb} bona fide scores"
            )));
        }
        Ok((na, nb))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.entries {
            w.serialize(ScoreRow {
                id: e.id.clone(),
                score: e.score,
                label: e.label.as_str().to_string(),
            })?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        for (i, row) in r.deserialize::<ScoreRow>().enumerate() {
            let row = row?;
            let label = row.label.parse::<EvalLabel>().map_err(|detail| Error::ManifestRow {
                path: path.to_path_buf(),
                row: i + 2,
                detail,
            })?;
            entries.push(ScoreEntry {
                id: row.id,
                score: row.score,
                label,
            });
        }
        Self::new(entries)
    }
}

/// `(APCER, BPCER)` at a threshold, as exact fractions of the class sizes.
pub fn apcer_bpcer_at(scores: &ScoreSet, threshold: f64) -> Result<(f64, f64)> {
    let (na, nb) = scores.check_classes()?;
    let mut accepted_attacks = 0usize;
    let mut rejected_bonafide = 0usize;
    for e in &scores.entries {
        match e.label {
            EvalLabel::Attack if e.score >= threshold => accepted_attacks += 1,
            EvalLabel::BonaFide if e.score < threshold => rejected_bonafide += 1,
            _ => {}
        }
    }
    Ok((
        accepted_attacks as f64 / na as f64,
        rejected_bonafide as f64 / nb as f64,
    ))
}

/// Error counts at every candidate threshold: below all scores, between
/// each pair of consecutive distinct scores, and above all scores.
struct Sweep {
    na: usize,
    nb: usize,
    /// `(threshold, accepted attacks, rejected bona fides)`, ascending.
    steps: Vec<(f64, usize, usize)>,
}

/// Threshold strictly inside `(lo, hi]` that separates `lo` from `hi`.
pub(crate) fn split_point(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

pub(crate) fn below_all(min: f64) -> f64 {
    min - 1.0 - min.abs()
}

pub(crate) fn above_all(max: f64) -> f64 {
    max + 1.0 + max.abs()
}

fn sweep(scores: &ScoreSet) -> Result<Sweep> {
    let (na, nb) = scores.check_classes()?;
    let mut sorted: Vec<(f64, EvalLabel)> = scores.entries.iter().map(|e| (e.score, e.label)).collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let mut steps = Vec::with_capacity(sorted.len() + 1);
    // Threshold below everything: every attack accepted, no bona fide rejected.
    let (mut acc_atk, mut rej_bf) = (na, 0usize);
    steps.push((below_all(sorted[0].0), acc_atk, rej_bf));
    let mut i = 0;
    while i < sorted.len() {
        let value = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == value {
            match sorted[i].1 {
                EvalLabel::Attack => acc_atk -= 1,
                EvalLabel::BonaFide => rej_bf += 1,
            }
            i += 1;
        }
        let t = if i < sorted.len() {
            split_point(value, sorted[i].0)
        } else {
            above_all(value)
        };
        steps.push((t, acc_atk, rej_bf));
    }
    Ok(Sweep { na, nb, steps })
}

/// Equal error rate by threshold sweep.
///
/// Among all candidate thresholds, picks the lowest one minimising
/// `|APCER − BPCER|` (compared exactly on integer counts) and reports the
/// mean of the two rates there.
pub fn compute_eer(scores: &ScoreSet) -> Result<Eer> {
    let sw = sweep(scores)?;
    let gap = |a: usize, b: usize| ((a * sw.nb) as i128 - (b * sw.na) as i128).abs();
    let mut best = sw.steps[0];
    for &step in &sw.steps[1..] {
        if gap(step.1, step.2) < gap(best.1, best.2) {
            best = step;
        }
    }
    let apcer = best.1 as f64 / sw.na as f64;
    let bpcer = best.2 as f64 / sw.nb as f64;
    Ok(Eer {
        eer: (apcer + bpcer) / 2.0,
        threshold: best.0,
        apcer,
        bpcer,
    })
}

/// One ROC point per candidate threshold, thresholds ascending, from
/// `(1, 1)` down to `(0, 0)`.
pub fn roc_points(scores: &ScoreSet) -> Result<Vec<RocPoint>> {
    let sw = sweep(scores)?;
    Ok(sw
        .steps
        .iter()
        .map(|&(t, a, b)| RocPoint {
            threshold: t,
            apcer: a as f64 / sw.na as f64,
            tpr: 1.0 - b as f64 / sw.nb as f64,
        })
        .collect())
}

/// Trapezoidal area under the ROC curve.
pub fn roc_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[0].apcer - w[1].apcer) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

/// Lowest BPCER reachable with APCER at most `target`.
pub fn bpcer_at_apcer(points: &[RocPoint], target: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.apcer <= target)
        .map(|p| 1.0 - p.tpr)
        .min_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
}

/// Lowest APCER reachable with BPCER at most `target`.
pub fn apcer_at_bpcer(points: &[RocPoint], target: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| 1.0 - p.tpr <= target)
        .map(|p| p.apcer)
        .min_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
}
