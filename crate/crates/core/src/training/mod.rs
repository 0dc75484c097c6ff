//! Mini-batch Adam training of the joint loss, checkpoint selection and
//! gradient verification.

mod adam;
mod checkpoint;
mod gradcheck;
mod log;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{check_params, ModelConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{loss_and_grads, PreparedSample};
use crate::parallel::Parallelism;
use crate::params::ParamStore;
use crate::preprocess::{SensorStats, Vocabulary};
use crate::synthdata::{mix, shuffle};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, ArrayEntry, Checkpoint, CheckpointManifest, CHECKPOINT_VERSION,
    MANIFEST_FILE as CHECKPOINT_MANIFEST, TENSOR_FILE,
};
pub use gradcheck::{
    grad_check, grad_check_with, probe_loss, probe_loss_and_grads, relative_error, ArrayCheck, GradCheckConfig,
    GradCheckReport, RELATIVE_ERROR_FLOOR,
};
pub use log::{EpochRecord, IterationRecord, LogRecord, TrainLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Validate every this many epochs; the last epoch is always validated.
    pub eval_every: usize,
    /// Stop once an epoch's mean training loss is below this value and every
    /// training sample in it was classified correctly.
    pub stop_below_train_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            learning_rate: a.learning_rate,
            weight_decay: a.weight_decay,
            batch_size: 4,
            epochs: 5,
            shuffle_seed: 0,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            eval_every: 1,
            stop_below_train_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("learning_rate", self.learning_rate), ("epsilon", self.epsilon)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::config("batch_size, epochs and eval_every must be at least 1"));
        }
        Ok(())
    }

    /// Number of optimizer steps per epoch; the final partial batch counts.
    pub fn iterations_per_epoch(&self, n_train: usize) -> usize {
        n_train.div_ceil(self.batch_size)
    }
}

/// Preprocessing artefacts stored alongside the weights.
#[derive(Clone, Copy, Debug)]
pub struct TrainContext<'a> {
    pub vocab: &'a Vocabulary,
    pub sensor_stats: &'a SensorStats,
}

pub struct TrainOutcome {
    /// Highest validation accuracy, then BLEU-4, then the earlier epoch.
    pub best: Checkpoint,
    /// State after the last completed epoch.
    pub last: Checkpoint,
    pub log: TrainLog,
    pub stopped_early: bool,
}

fn better(candidate: &EpochRecord, incumbent: &EpochRecord) -> bool {
    let (ca, ia) = (
        candidate.val_accuracy.unwrap_or(-1.0),
        incumbent.val_accuracy.unwrap_or(-1.0),
    );
    if ca != ia {
        return ca > ia;
    }
    candidate.val_bleu4.unwrap_or(-1.0) > incumbent.val_bleu4.unwrap_or(-1.0)
}

/// Trains from `init` and returns the best and last checkpoints with the log.
#[allow(clippy::too_many_arguments)]
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    init: ParamStore,
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
    ctx: TrainContext<'_>,
    par: Parallelism,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    check_params(model_cfg, &init)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let adam_cfg = train_cfg.adam();
    let mut params = init;
    let mut adam = AdamState::new(&params);
    let mut log = TrainLog::default();
    let mut best: Option<Checkpoint> = None;
    let mut iteration = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let snapshot = |params: &ParamStore, adam: &AdamState, epoch, metrics: &EpochRecord| Checkpoint {
        params: params.clone(),
        adam: adam.clone(),
        model_config: model_cfg.clone(),
        train_config: train_cfg.clone(),
        epoch,
        metrics: Some(metrics.clone()),
        vocab: ctx.vocab.clone(),
        sensor_stats: ctx.sensor_stats.clone(),
    };
    let mut last = None;

    for epoch in 1..=train_cfg.epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(train_cfg.shuffle_seed, epoch as u64));
        order.sort_unstable();
        shuffle(&mut order, &mut rng);
        let (mut sum_total, mut sum_action, mut sum_expl, mut correct) = (0.0, 0.0, 0.0, 0usize);
        let batches: Vec<&[usize]> = order.chunks(train_cfg.batch_size).collect();
        for (b, idx) in batches.iter().enumerate() {
            let batch: Vec<&PreparedSample> = idx.iter().map(|&i| &train_set[i]).collect();
            let results = par.map(&batch, |s| loss_and_grads(&params, model_cfg, s));
            let mut grads = params.zeros_like();
            let (mut t, mut a, mut e) = (0.0, 0.0, 0.0);
            for (r, s) in results.into_iter().zip(&batch) {
                let r = r?;
                t += r.loss.total;
                a += r.loss.action;
                e += r.loss.explanation;
                correct += usize::from(r.predicted == s.label);
                grads.accumulate(&r.grads);
            }
            let n = batch.len() as f64;
            if !(t.is_finite() && grads.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    ids: batch.iter().map(|s| s.id.as_str()).collect::<Vec<_>>().join(","),
                });
            }
            grads.scale(1.0 / n);
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
            iteration += 1;
            sum_total += t;
            sum_action += a;
            sum_expl += e;
            log.records.push(LogRecord::Iteration(IterationRecord {
                epoch,
                iteration,
                batch: b,
                batch_size: batch.len(),
                action_loss: a / n,
                explanation_loss: e / n,
                total_loss: t / n,
            }));
        }
        let n = train_set.len() as f64;
        let mut record = EpochRecord {
            epoch,
            iterations: batches.len(),
            train_loss: sum_total / n,
            train_action_loss: sum_action / n,
            train_explanation_loss: sum_expl / n,
            train_accuracy: correct as f64 / n,
            val_accuracy: None,
            val_bleu4: None,
        };
        let converged = train_cfg
            .stop_below_train_loss
            .is_some_and(|th| record.train_loss < th && correct == train_set.len());
        let final_epoch = epoch == train_cfg.epochs || converged;
        if epoch % train_cfg.eval_every == 0 || final_epoch {
            let ev = evaluate(&params, model_cfg, val_set, ctx.vocab, par)?;
            record.val_accuracy = Some(ev.accuracy);
            record.val_bleu4 = ev.bleu.map(|b| b.corpus);
            if best
                .as_ref()
                .is_none_or(|c| better(&record, c.metrics.as_ref().expect("set")))
            {
                best = Some(snapshot(&params, &adam, epoch, &record));
            }
        }
        ::log::info!(
            "epoch {epoch}: train loss {:.5} acc {:.3} val acc {:?} bleu {:?}",
            record.train_loss,
            record.train_accuracy,
            record.val_accuracy,
            record.val_bleu4
        );
        log.epoch_seconds.push(started.elapsed().as_secs_f64());
        last = Some(snapshot(&params, &adam, epoch, &record));
        log.records.push(LogRecord::Epoch(record));
        if converged {
            stopped_early = epoch < train_cfg.epochs;
            break;
        }
    }
    Ok(TrainOutcome {
        best: best.expect("last epoch is always evaluated"),
        last: last.expect("at least one epoch"),
        log,
        stopped_early,
    })
}
