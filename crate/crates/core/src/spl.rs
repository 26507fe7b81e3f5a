//! Self-paced sample weighting with an adaptive threshold.
//!
//! Samples whose reconstruction loss falls at or below the threshold `λ` are
//! treated as suspicious and dropped (`v = 0`); the remaining samples get
//! `v = 1 − λ/L`, so larger losses weigh more. `λ` follows the batch loss
//! statistics and tightens from `μ − m·σ` towards `μ − σ` as the step
//! counter advances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_M: f64 = 4.0;
pub const DEFAULT_R: f64 = 5e-3;
pub const HISTOGRAM_BINS: usize = 10;

/// Threshold for step `s`:
/// `min(μ − max(m − r·s, 1)·σ, μ − σ)`.
///
/// May be negative; negative thresholds keep every sample.
pub fn compute_lambda<T: Scalar>(mu: T, sigma: T, step: u64, m: T, r: T) -> T {
    let s = T::from_u64(step).expect("step representable");
    let coefficient = (m - r * s).max(T::one());
    let lambda_max = mu - sigma;
    (mu - coefficient * sigma).min(lambda_max)
}

/// Closed-form weight of a single loss.
#[inline]
pub fn sample_weight<T: Scalar>(loss: T, lambda: T) -> T {
    if lambda <= T::zero() {
        // Also covers loss == 0 with lambda <= 0.
        return T::one();
    }
    if loss <= lambda {
        T::zero()
    } else {
        (T::one() - lambda / loss).max(T::zero()).min(T::one())
    }
}

/// Weights for a batch: `0` when `L ≤ λ`, otherwise `1 − λ/L` clamped to `[0, 1]`.
pub fn compute_weights<T: Scalar>(losses: &[T], lambda: T) -> Result<Vec<T>> {
    if !lambda.is_finite() {
        return Err(Error::NonFinite(format!("lambda = {lambda}")));
    }
    losses
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if !l.is_finite() {
                Err(Error::NonFinite(format!("loss {i} = {l}")))
            } else if l < T::zero() {
                Err(Error::invalid(format!("loss {i} = {l} is negative")))
            } else {
                Ok(sample_weight(l, lambda))
            }
        })
        .collect()
}

/// Arithmetic mean and population standard deviation.
pub fn batch_statistics<T: Scalar>(losses: &[T]) -> Result<(T, T)> {
    if losses.len() < 2 {
        return Err(Error::invalid(format!(
            "batch statistics need at least 2 losses, got {}",
            losses.len()
        )));
    }
    let n = T::from_usize(losses.len()).unwrap();
    let mu = losses.iter().copied().sum::<T>() / n;
    let var = losses.iter().map(|&l| (l - mu) * (l - mu)).sum::<T>() / n;
    Ok((mu, var.sqrt()))
}

/// Where `μ` and `σ` come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsMode {
    /// Statistics of the current mini-batch.
    #[default]
    Batch,
    /// Cumulative statistics over every post-warm-up loss seen so far.
    Running,
}

/// Welford accumulator for [`StatsMode::Running`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }
}

/// Schedule bookkeeping owned by the training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplState {
    /// Mini-batches processed since warm-up ended.
    pub step: u64,
    pub m: f64,
    pub r: f64,
    pub warmup_active: bool,
    pub last_lambda: Option<f64>,
    #[serde(default)]
    pub stats_mode: StatsMode,
    #[serde(default)]
    pub running: RunningStats,
}

impl SplState {
    pub fn new(m: f64, r: f64) -> Result<Self> {
        let state = Self {
            step: 0,
            m,
            r,
            warmup_active: false,
            last_lambda: None,
            stats_mode: StatsMode::Batch,
            running: RunningStats::default(),
        };
        state.validate()?;
        Ok(state)
    }

    pub fn with_stats_mode(mut self, mode: StatsMode) -> Self {
        self.stats_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m >= 1.0) {
            return Err(Error::Config(format!("m = {} must be at least 1", self.m)));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::Config(format!("r = {} must be positive", self.r)));
        }
        Ok(())
    }

    /// Step at which the coefficient reaches 1 and `λ` hits `μ − σ`.
    pub fn saturation_step(&self) -> f64 {
        (self.m - 1.0) / self.r
    }
}

/// Per-step record of the weighting.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchReport<T> {
    /// Step counter value the threshold was computed with.
    pub step: u64,
    pub losses: Vec<T>,
    pub weights: Vec<T>,
    pub mu: T,
    pub sigma: T,
    /// `None` during warm-up and for degenerate (`σ = 0`) batches.
    pub lambda_used: Option<T>,
    pub removed_count: usize,
}

impl<T: Scalar> BatchReport<T> {
    /// Counts of weights in ten equal bins over `[0, 1]` (last bin closed).
    pub fn weight_histogram(&self) -> [usize; HISTOGRAM_BINS] {
        let mut bins = [0usize; HISTOGRAM_BINS];
        for &w in &self.weights {
            let idx = (w.as_f64() * HISTOGRAM_BINS as f64).floor();
            let idx = (idx.max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            bins[idx] += 1;
        }
        bins
    }

    /// Recomputes the weights from the recorded losses and threshold.
    pub fn is_consistent(&self) -> bool {
        if self.losses.len() != self.weights.len() {
            return false;
        }
        let removed = self.weights.iter().filter(|&&w| w == T::zero()).count();
        if removed != self.removed_count {
            return false;
        }
        match self.lambda_used {
            Some(lambda) => compute_weights(&self.losses, lambda)
                .map(|w| w == self.weights)
                .unwrap_or(false),
            None => self.weights.iter().all(|&w| w == T::one()),
        }
    }

    /// One JSON object as written to the training log.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "step": self.step,
            "mu": self.mu.as_f64(),
            "sigma": self.sigma.as_f64(),
            "lambda": self.lambda_used.map(|l| l.as_f64()),
            "removed_count": self.removed_count,
            "weight_histogram": self.weight_histogram().to_vec(),
        })
    }
}

/// One pass of the weighting rule over a mini-batch.
///
/// During warm-up every weight is 1 and the step counter stays put.
/// Otherwise `λ` is computed from the batch statistics at the current step,
/// the step advances by one, and the weights follow the closed form.
pub fn spl_step<T: Scalar>(losses: &[T], state: &SplState) -> Result<(BatchReport<T>, SplState)> {
    state.validate()?;
    if let Some((i, l)) = losses.iter().enumerate().find(|(_, l)| !l.is_finite()) {
        return Err(Error::NonFinite(format!("loss {i} = {l}")));
    }
    let (mut mu, mut sigma) = batch_statistics(losses)?;
    let mut next = state.clone();
    if state.warmup_active {
        next.last_lambda = None;
        let report = BatchReport {
            step: state.step,
            losses: losses.to_vec(),
            weights: vec![T::one(); losses.len()],
            mu,
            sigma,
            lambda_used: None,
            removed_count: 0,
        };
        return Ok((report, next));
    }

    if state.stats_mode == StatsMode::Running {
        for &l in losses {
            next.running.push(l.as_f64());
        }
        mu = T::lit(next.running.mean);
        sigma = T::lit(next.running.std());
    }

    let step = state.step;
    next.step += 1;
    if sigma == T::zero() {
        log::warn!("step {step}: all losses equal; keeping every sample");
        next.last_lambda = None;
        let report = BatchReport {
            step,
            losses: losses.to_vec(),
            weights: vec![T::one(); losses.len()],
            mu,
            sigma,
            lambda_used: None,
            removed_count: 0,
        };
        return Ok((report, next));
    }

    let lambda = compute_lambda(mu, sigma, step, T::lit(state.m), T::lit(state.r));
    let weights = compute_weights(losses, lambda)?;
    let removed_count = weights.iter().filter(|&&w| w == T::zero()).count();
    next.last_lambda = Some(lambda.as_f64());
    let report = BatchReport {
        step,
        losses: losses.to_vec(),
        weights,
        mu,
        sigma,
        lambda_used: Some(lambda),
        removed_count,
    };
    Ok((report, next))
}
