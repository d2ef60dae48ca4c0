//! Training loop for the base model (target-only batches) and the
//! multi-group model (half target, half auxiliary batches trained with the
//! simultaneous-learning loss).

pub mod checkpoint;
pub mod optim;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{compose_batch, epoch_plan, target_batch, Batch, GroupedDataset};
use crate::error::{invalid, Error, Result};
use crate::loss::{self, Group, Hyperparameters};
use crate::metrics;
use crate::nn::Model;
use crate::tensor::Tensor;

pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint};
pub use optim::{adagrad_step, sgd_step, OptimizerKind, OptimizerState};

/// What kind of run this is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// Target-only batches, cross-entropy loss.
    Baseline,
    /// As `Baseline`, with the model's dropout layers active at `rate`.
    Dropout { rate: f64 },
    /// Mixed batches and the simultaneous-learning loss.
    Simultaneous,
}

impl Mode {
    pub fn label(&self) -> String {
        match self {
            Mode::Baseline => "baseline".into(),
            Mode::Dropout { rate } => format!("dropout_{rate}"),
            Mode::Simultaneous => "sl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub hyper: Hyperparameters,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    /// Reshuffle the target training split at the start of every epoch.
    #[serde(default = "default_true")]
    pub shuffle_target: bool,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_epochs() -> usize {
    500
}
fn default_batch() -> usize {
    32
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adagrad
}
fn default_mode() -> Mode {
    Mode::Simultaneous
}
fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            optimizer: default_optimizer(),
            hyper: Hyperparameters::default(),
            mode: default_mode(),
            seed: 0,
            shuffle_target: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(invalid("epochs must be at least 1"));
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(invalid(format!(
                "batch size {} must be even and >= 2",
                self.batch_size
            )));
        }
        if let Mode::Dropout { rate } = self.mode {
            if !(0.0..1.0).contains(&rate) {
                return Err(invalid(format!("dropout rate {rate} outside [0, 1)")));
            }
        }
        self.hyper.validate()
    }

    /// Target samples consumed per step.
    pub fn target_per_step(&self) -> usize {
        match self.mode {
            Mode::Simultaneous => self.batch_size / 2,
            _ => self.batch_size,
        }
    }
}

/// Random stream for one epoch; independent of how many epochs ran before,
/// so a resumed run draws exactly what an uninterrupted one would.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_dacc: Option<f64>,
}

/// Provenance counters over every step of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchAudit {
    pub steps: usize,
    pub target_samples: usize,
    pub aux_samples: usize,
    /// Steps whose composition was not exactly half target, half auxiliary.
    pub unbalanced_steps: usize,
    /// Steps in which an auxiliary sample appeared twice.
    pub duplicate_aux_steps: usize,
}

impl BatchAudit {
    fn record(&mut self, batch: &Batch, mixed: bool) {
        let t = batch.count(Group::Target);
        let a = batch.count(Group::Auxiliary);
        self.steps += 1;
        self.target_samples += t;
        self.aux_samples += a;
        if mixed && t != a {
            self.unbalanced_steps += 1;
        }
        let unique: HashSet<usize> = batch
            .provenance
            .iter()
            .filter(|p| p.group == Group::Auxiliary)
            .map(|p| p.index)
            .collect();
        if unique.len() != a {
            self.duplicate_aux_steps += 1;
        }
    }
}

/// Per-step information handed to a [`StepObserver`].
#[derive(Debug, Clone)]
pub struct StepInfo<'a> {
    /// 1-based epoch and step.
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub batch: &'a Batch,
}

pub trait StepObserver {
    /// Called after each parameter update.
    fn after_step(&mut self, info: &StepInfo<'_>, model: &Model) -> Result<()>;
}

impl<F: FnMut(&StepInfo<'_>, &Model) -> Result<()>> StepObserver for F {
    fn after_step(&mut self, info: &StepInfo<'_>, model: &Model) -> Result<()> {
        self(info, model)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_model: Model,
    /// Model after the epoch with the highest validation dacc (earliest on
    /// ties); the final model when there is no validation split.
    pub best_model: Model,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub step_losses: Vec<f64>,
    pub audit: BatchAudit,
    pub optimizer: OptimizerState,
}

/// Mean batch loss and its gradient with respect to the logits.
pub fn batch_loss_and_grad(
    mode: Mode,
    hyper: &Hyperparameters,
    model: &Model,
    batch: &Batch,
    probabilities: &Tensor,
) -> Result<(f64, Tensor)> {
    let layout = model.layout();
    let b = batch.len();
    let scale = 1.0 / b as f64;
    let mut total = 0.0;
    let mut grad = Tensor::zeros(probabilities.shape());
    for (i, y) in batch.labels.iter().enumerate() {
        let p = probabilities.row(i);
        let (l, g) = match mode {
            Mode::Simultaneous => (
                loss::sll(y.values(), p, layout, hyper)?,
                loss::sll_grad_from_probs(y.values(), p, layout, hyper),
            ),
            Mode::Baseline | Mode::Dropout { .. } => {
                let g = p.iter().zip(y.values()).map(|(pi, yi)| pi - yi).collect();
                (loss::cce(y.values(), p)?, g)
            }
        };
        total += l;
        for (dst, src) in grad.row_mut(i).iter_mut().zip(g) {
            *dst = src * scale;
        }
    }
    Ok((total * scale, grad))
}

/// Stateful trainer; one [`Trainer::run_epoch`] call per epoch.
pub struct Trainer<'a> {
    config: TrainConfig,
    dataset: &'a GroupedDataset,
    model: Model,
    optimizer: OptimizerState,
    epochs_done: usize,
    history: Vec<EpochRecord>,
    step_losses: Vec<f64>,
    best: Option<(f64, usize, Model)>,
    audit: BatchAudit,
}

impl<'a> Trainer<'a> {
    pub fn new(model: Model, dataset: &'a GroupedDataset, config: TrainConfig) -> Result<Self> {
        let optimizer =
            OptimizerState::new(config.optimizer, config.learning_rate, model.params())?;
        Self::resume(
            Checkpoint {
                model,
                optimizer: Some(optimizer),
                epochs_completed: 0,
            },
            dataset,
            config,
        )
    }

    /// Continues from a checkpoint. Best-model tracking restarts at the
    /// resumed epoch.
    pub fn resume(ckpt: Checkpoint, dataset: &'a GroupedDataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = ckpt.model;
        check_compatible(&model, dataset, &config)?;
        let optimizer = match ckpt.optimizer {
            Some(o) => o,
            None => OptimizerState::new(config.optimizer, config.learning_rate, model.params())?,
        };
        Ok(Trainer {
            config,
            dataset,
            model,
            optimizer,
            epochs_done: ckpt.epochs_completed,
            history: Vec::new(),
            step_losses: Vec::new(),
            best: None,
            audit: BatchAudit::default(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            optimizer: Some(self.optimizer.clone()),
            epochs_completed: self.epochs_done,
        }
    }

    pub fn run_epoch(&mut self, observer: &mut dyn StepObserver) -> Result<EpochRecord> {
        let epoch = self.epochs_done + 1;
        let cfg = &self.config;
        let ds = self.dataset;
        let layout = self.model.layout();
        let mut rng = epoch_rng(cfg.seed, self.epochs_done);
        let plan = epoch_plan(
            ds.target_train.len(),
            cfg.target_per_step(),
            cfg.shuffle_target,
            &mut rng,
        )?;
        let mixed = cfg.mode == Mode::Simultaneous;
        let mut epoch_loss = 0.0;
        for (s, ids) in plan.iter().enumerate() {
            let batch = if mixed {
                compose_batch(layout, &ds.target_train, ids, &ds.aux_pool, cfg.batch_size, &mut rng)?
            } else {
                target_batch(layout, &ds.target_train, ids)?
            };
            self.audit.record(&batch, mixed);
            let pass = self.model.forward(&batch.inputs, Some(&mut rng))?;
            let (loss, logit_grad) =
                batch_loss_and_grad(cfg.mode, &cfg.hyper, &self.model, &batch, &pass.probabilities)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step: s + 1,
                    loss,
                });
            }
            let grads = self.model.backward(&pass, &logit_grad)?;
            self.optimizer.apply(self.model.params_mut(), &grads.params)?;
            if self.model.params().tensors().any(|t| !t.all_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    step: s + 1,
                    loss,
                });
            }
            epoch_loss += loss;
            self.step_losses.push(loss);
            observer.after_step(
                &StepInfo {
                    epoch,
                    step: s + 1,
                    loss,
                    batch: &batch,
                },
                &self.model,
            )?;
        }
        let val_dacc = if ds.target_val.is_empty() {
            None
        } else {
            let probs = metrics::predict_samples(&self.model, &ds.target_val, 64)?;
            let labels = ds
                .target_val
                .iter()
                .map(|s| s.label(layout))
                .collect::<Result<Vec<_>>>()?;
            Some(metrics::dacc(&probs, &labels, layout)?)
        };
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / plan.len() as f64,
            val_dacc,
        };
        if let Some(v) = val_dacc {
            if self.best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                self.best = Some((v, epoch, self.model.clone()));
            }
        }
        self.history.push(record);
        self.epochs_done = epoch;
        log::debug!(
            "epoch {epoch}: loss {:.5} val dacc {:?}",
            record.train_loss,
            record.val_dacc
        );
        Ok(record)
    }

    /// Runs the remaining epochs up to `config.epochs`.
    pub fn run_with(mut self, observer: &mut dyn StepObserver) -> Result<TrainOutcome> {
        while self.epochs_done < self.config.epochs {
            self.run_epoch(observer)?;
        }
        Ok(self.finish())
    }

    pub fn run(self) -> Result<TrainOutcome> {
        self.run_with(&mut |_: &StepInfo<'_>, _: &Model| Ok(()))
    }

    pub fn finish(self) -> TrainOutcome {
        let (best_epoch, best_model) = match self.best {
            Some((_, e, m)) => (e, m),
            None => (self.epochs_done, self.model.clone()),
        };
        TrainOutcome {
            final_model: self.model,
            best_model,
            best_epoch,
            history: self.history,
            step_losses: self.step_losses,
            audit: self.audit,
            optimizer: self.optimizer,
        }
    }
}

fn check_compatible(model: &Model, ds: &GroupedDataset, cfg: &TrainConfig) -> Result<()> {
    let layout = model.layout();
    if layout.k != ds.layout.k {
        return Err(invalid(format!(
            "model head has {} target outputs, dataset has {} target classes",
            layout.k, ds.layout.k
        )));
    }
    match cfg.mode {
        Mode::Simultaneous => {
            if layout.m == 0 || layout.m != ds.layout.m {
                return Err(invalid(format!(
                    "simultaneous mode needs a k+m head with m = {}, model has m = {}",
                    ds.layout.m, layout.m
                )));
            }
            if ds.aux_pool.len() < cfg.batch_size / 2 {
                return Err(invalid(format!(
                    "auxiliary pool ({}) smaller than half a batch",
                    ds.aux_pool.len()
                )));
            }
        }
        Mode::Baseline | Mode::Dropout { .. } => {
            if layout.m != 0 {
                return Err(invalid("baseline and dropout modes need a k-output head"));
            }
        }
    }
    if let Mode::Dropout { .. } = cfg.mode {
        if !model.spec().has_dropout() {
            return Err(invalid("dropout mode needs a model with dropout layers"));
        }
    }
    if let Some(shape) = ds.input_shape() {
        if shape != model.spec().input_shape.as_slice() {
            return Err(invalid(format!(
                "dataset samples have shape {shape:?}, model expects {:?}",
                model.spec().input_shape
            )));
        }
    }
    Ok(())
}

/// Trains `model` on `dataset` for `config.epochs` epochs.
pub fn train(model: Model, dataset: &GroupedDataset, config: TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(model, dataset, config)?.run()
}
