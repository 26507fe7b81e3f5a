use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spl::{StatsMode, DEFAULT_M, DEFAULT_R};

/// Optimizer, schedule and self-paced settings for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Per-epoch exponential decay of the learning rate.
    pub lr_gamma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub m: f64,
    pub r: f64,
    pub seed: u64,
    pub spl_enabled: bool,
    pub stats_mode: StatsMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_gamma: 0.98,
            batch_size: 64,
            epochs: 25,
            warmup_epochs: 5,
            m: DEFAULT_M,
            r: DEFAULT_R,
            seed: 0,
            spl_enabled: true,
            stats_mode: StatsMode::Batch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("lr_gamma", self.lr_gamma),
            ("r", self.r),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [("momentum", self.momentum), ("weight_decay", self.weight_decay)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be nonnegative")));
            }
        }
        if !(self.m.is_finite() && self.m >= 1.0) {
            return Err(Error::Config(format!("m = {} must be at least 1", self.m)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size = {} must be at least 2",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "warmup_epochs = {} must be below epochs = {}",
                self.warmup_epochs, self.epochs
            )));
        }
        Ok(())
    }

    /// Learning rate used during epoch `epoch` (zero-based): `lr · γ^epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_gamma.powi(epoch as i32)
    }

    /// Fields that must agree between a checkpoint and a resumed run. The
    /// epoch budget may be extended.
    pub fn conflicts_with(&self, stored: &TrainConfig) -> Option<String> {
        let mut a = self.clone();
        a.epochs = stored.epochs;
        if a == *stored {
            return None;
        }
        let pairs = [
            ("learning_rate", self.learning_rate != stored.learning_rate),
            ("momentum", self.momentum != stored.momentum),
            ("weight_decay", self.weight_decay != stored.weight_decay),
            ("lr_gamma", self.lr_gamma != stored.lr_gamma),
            ("batch_size", self.batch_size != stored.batch_size),
            ("warmup_epochs", self.warmup_epochs != stored.warmup_epochs),
            ("m", self.m != stored.m),
            ("r", self.r != stored.r),
            ("seed", self.seed != stored.seed),
            ("spl_enabled", self.spl_enabled != stored.spl_enabled),
            ("stats_mode", self.stats_mode != stored.stats_mode),
        ];
        let changed: Vec<&str> = pairs.iter().filter(|p| p.1).map(|p| p.0).collect();
        Some(changed.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.lr_at(0), 1e-5);
        assert_eq!(c.lr_at(3), 1e-5 * 0.98f64.powi(3));
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig { batch_size: 1, ..Default::default() },
            TrainConfig { warmup_epochs: 25, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { m: 0.5, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn conflicts_ignore_epoch_budget() {
        let a = TrainConfig::default();
        let longer = TrainConfig { epochs: 40, ..a.clone() };
        assert_eq!(longer.conflicts_with(&a), None);
        let other = TrainConfig { batch_size: 32, ..a.clone() };
        assert_eq!(other.conflicts_with(&a).as_deref(), Some("batch_size"));
    }
}
