//! Training loop: warm-up, per-batch self-paced reweighting, weighted
//! gradient step, per-epoch learning-rate decay and checkpoints.

mod checkpoint;
mod config;
mod sgd;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub use checkpoint::{checkpoint_dtype, Checkpoint, ARCH_MEMBER, META_MEMBER, SCHEMA_VERSION};
pub use config::TrainConfig;
pub use sgd::sgd_update;

use crate::data::TrainingSet;
use crate::error::{Error, Result};
use crate::model::{weighted_batch_objective, ArchSpec, Cae, ImageTensor, ParamSet};
use crate::scalar::Scalar;
use crate::spl::{spl_step, BatchReport, SplState};

/// Everything logged for one optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchRecord<T> {
    /// Zero-based epoch.
    pub epoch: usize,
    /// Batch index within the epoch.
    pub batch: usize,
    /// Batches processed since the start of training.
    pub global_step: usize,
    pub lr: f64,
    /// Weighted objective the gradient was taken of.
    pub objective: T,
    pub mean_loss: T,
    pub report: BatchReport<T>,
}

impl<T: Scalar> BatchRecord<T> {
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.report.to_json();
        let obj = v.as_object_mut().expect("object");
        obj.insert("kind".into(), json!("batch"));
        obj.insert("epoch".into(), json!(self.epoch));
        obj.insert("batch".into(), json!(self.batch));
        obj.insert("global_step".into(), json!(self.global_step));
        obj.insert("lr".into(), json!(self.lr));
        obj.insert("objective".into(), json!(self.objective.as_f64()));
        obj.insert("mean_loss".into(), json!(self.mean_loss.as_f64()));
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    /// Zero-based epoch that just finished.
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub removed: usize,
    pub wall_time_s: f64,
}

impl EpochSummary {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "kind": "epoch",
            "epoch": self.epoch,
            "steps": self.steps,
            "mean_loss": self.mean_loss,
            "lr": self.lr,
            "removed": self.removed,
            "wall_time_s": self.wall_time_s,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog<T> {
    pub batches: Vec<BatchRecord<T>>,
    pub epochs: Vec<EpochSummary>,
}

/// Hooks for streaming logs and checkpoints out of the loop.
pub trait TrainObserver<T: Scalar> {
    fn on_batch(&mut self, _record: &BatchRecord<T>) -> Result<()> {
        Ok(())
    }

    fn on_epoch(&mut self, _summary: &EpochSummary, _checkpoint: &Checkpoint<T>) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoopObserver;

impl<T: Scalar> TrainObserver<T> for NoopObserver {}

/// Seeded visiting order of the samples for one epoch.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Splits an epoch order into batches; a trailing batch of fewer than two
/// samples is dropped.
pub fn partition(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    order
        .chunks(batch_size)
        .filter(|b| b.len() >= 2)
        .collect()
}

pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    let full = n / batch_size;
    if n % batch_size >= 2 {
        full + 1
    } else {
        full
    }
}

/// Stateful training run; owns the model, momentum buffers and schedule.
pub struct Trainer<T> {
    config: TrainConfig,
    model: Cae<T>,
    momentum: ParamSet<T>,
    spl: SplState,
    /// Completed epochs.
    epoch: usize,
}

impl<T: Scalar> Trainer<T> {
    /// Fresh run; the model is initialized from `config.seed`.
    pub fn new(config: TrainConfig, arch: ArchSpec) -> Result<Self> {
        config.validate()?;
        let model = Cae::new(arch, config.seed)?;
        let momentum = model.params().zeros_like();
        let spl = SplState::new(config.m, config.r)?.with_stats_mode(config.stats_mode);
        Ok(Self {
            config,
            model,
            momentum,
            spl,
            epoch: 0,
        })
    }

    /// Continues from a checkpoint. Everything but the epoch budget must
    /// match the stored configuration.
    pub fn resume(checkpoint: Checkpoint<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if let Some(fields) = config.conflicts_with(&checkpoint.config) {
            return Err(Error::ConfigConflict(fields));
        }
        let model = Cae::from_params(checkpoint.arch, checkpoint.params)?;
        model.params().check_layout(&checkpoint.momentum)?;
        Ok(Self {
            config,
            model,
            momentum: checkpoint.momentum,
            spl: checkpoint.spl,
            epoch: checkpoint.epoch,
        })
    }

    pub fn model(&self) -> &Cae<T> {
        &self.model
    }

    pub fn into_model(self) -> Cae<T> {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn spl_state(&self) -> &SplState {
        &self.spl
    }

    pub fn completed_epochs(&self) -> usize {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            epoch: self.epoch,
            arch: self.model.arch().clone(),
            params: self.model.params().clone(),
            momentum: self.momentum.clone(),
            spl: self.spl.clone(),
            config: self.config.clone(),
        }
    }

    fn check_data(&self, data: &TrainingSet<T>) -> Result<()> {
        if data.len() < 2 {
            return Err(Error::invalid(format!(
                "training needs at least 2 samples, got {}",
                data.len()
            )));
        }
        let expected = self.model.input_shape();
        if let Some((id, img)) = data.iter().find(|(_, img)| img.shape() != expected) {
            return Err(Error::shape(format!(
                "sample {id} has shape {:?}, model expects {expected:?}",
                img.shape()
            )));
        }
        Ok(())
    }

    /// Runs every remaining epoch.
    pub fn run(&mut self, data: &TrainingSet<T>, observer: &mut dyn TrainObserver<T>) -> Result<TrainLog<T>> {
        self.check_data(data)?;
        let mut log = TrainLog::default();
        while !self.is_finished() {
            let summary = self.run_epoch(data, observer, &mut log)?;
            log.epochs.push(summary);
        }
        Ok(log)
    }

    fn run_epoch(
        &mut self,
        data: &TrainingSet<T>,
        observer: &mut dyn TrainObserver<T>,
        log: &mut TrainLog<T>,
    ) -> Result<EpochSummary> {
        let started = Instant::now();
        let epoch = self.epoch;
        let lr = self.config.lr_at(epoch);
        let in_warmup = epoch < self.config.warmup_epochs;
        let per_epoch = batches_per_epoch(data.len(), self.config.batch_size);
        let order = epoch_order(self.config.seed, epoch, data.len());
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        let mut removed = 0usize;
        let mut steps = 0usize;
        for (b, idx) in partition(&order, self.config.batch_size).into_iter().enumerate() {
            let global_step = epoch * per_epoch + b;
            let diverged = |detail: String| Error::Divergence {
                epoch,
                batch: b,
                global_step,
                detail,
            };
            let images: Vec<&ImageTensor<T>> = idx.iter().map(|&i| data.image(i)).collect();
            let fwd = self.model.forward_refs(&images)?;
            let losses = fwd.losses();
            if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
                return Err(diverged(format!(
                    "loss of sample {} is {}",
                    data.id(idx[i]),
                    losses[i]
                )));
            }

            let report = if self.config.spl_enabled {
                self.spl.warmup_active = in_warmup;
                let (report, next) = spl_step(&losses, &self.spl)?;
                self.spl = next;
                report
            } else {
                // No reweighting: behaves like a permanent warm-up.
                let frozen = SplState {
                    warmup_active: true,
                    ..self.spl.clone()
                };
                spl_step(&losses, &frozen)?.0
            };

            let objective = weighted_batch_objective(&losses, &report.weights)?;
            let grads = match self.model.backward(&fwd, &report.weights) {
                Ok(g) => g,
                Err(Error::NonFinite(d)) => return Err(diverged(d)),
                Err(e) => return Err(e),
            };
            sgd_update(
                self.model.params_mut(),
                &grads,
                &mut self.momentum,
                T::lit(lr),
                T::lit(self.config.momentum),
                T::lit(self.config.weight_decay),
            )?;
            if let Some(name) = self.model.params().first_non_finite() {
                return Err(diverged(format!("parameter {name} became non-finite")));
            }

            let n = T::from_usize(losses.len()).unwrap();
            let mean_loss = losses.iter().copied().sum::<T>() / n;
            loss_sum += losses.iter().map(|l| l.as_f64()).sum::<f64>();
            loss_count += losses.len();
            removed += report.removed_count;
            steps += 1;
            let record = BatchRecord {
                epoch,
                batch: b,
                global_step,
                lr,
                objective,
                mean_loss,
                report,
            };
            observer.on_batch(&record)?;
            log.batches.push(record);
        }
        self.epoch += 1;
        if self.config.spl_enabled {
            self.spl.warmup_active = self.epoch < self.config.warmup_epochs;
        }
        let summary = EpochSummary {
            epoch,
            steps,
            mean_loss: loss_sum / loss_count.max(1) as f64,
            lr,
            removed,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        observer.on_epoch(&summary, &self.checkpoint())?;
        Ok(summary)
    }
}

/// Trains a fresh model on unlabeled data for the configured epoch budget.
pub fn fit<T: Scalar>(
    data: &TrainingSet<T>,
    config: &TrainConfig,
    arch: ArchSpec,
    observer: &mut dyn TrainObserver<T>,
) -> Result<(Cae<T>, TrainLog<T>)> {
    let mut trainer = Trainer::new(config.clone(), arch)?;
    let log = trainer.run(data, observer)?;
    Ok((trainer.into_model(), log))
}

/// Continues an interrupted run; a checkpoint from the final epoch returns
/// its parameters unchanged with an empty log.
pub fn resume<T: Scalar>(
    checkpoint: Checkpoint<T>,
    config: &TrainConfig,
    data: &TrainingSet<T>,
    observer: &mut dyn TrainObserver<T>,
) -> Result<(Cae<T>, TrainLog<T>)> {
    let mut trainer = Trainer::resume(checkpoint, config.clone())?;
    let log = trainer.run(data, observer)?;
    Ok((trainer.into_model(), log))
}
