//! Mini-batch Adam training with step decay, early stopping on validation
//! loss, and restoration of the best epoch.

use serde::{Deserialize, Serialize};

use super::models::ViewClassifier;
use super::predict::predict_from_logits;
use crate::augment::ViewStack;
use crate::error::{Error, Result};
use crate::math::{cross_entropy_loss, Optimizer, Rng, StepDecaySchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Initial learning rate. Zero is allowed and freezes every parameter.
    pub lr: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub lr_step_size: usize,
    pub lr_gamma: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Multiplier on the learning rate of attention parameters; zero
    /// freezes the attention layer.
    pub attention_lr_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            patience: 3,
            lr_step_size: 5,
            lr_gamma: 0.5,
            max_epochs: 100,
            batch_size: 32,
            attention_lr_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> StepDecaySchedule {
        StepDecaySchedule {
            initial_lr: self.lr,
            step_size: self.lr_step_size,
            gamma: self.lr_gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule().validate()?;
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.attention_lr_scale >= 0.0 && self.attention_lr_scale.is_finite()) {
            return Err(Error::Config("attention_lr_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Stacks paired with their labels.
#[derive(Clone, Copy, Debug)]
pub struct Labeled<'a> {
    pub stack: &'a ViewStack,
    pub labels: &'a [usize],
}

impl<'a> Labeled<'a> {
    pub fn new(stack: &'a ViewStack, labels: &'a [usize]) -> Result<Self> {
        if stack.samples() != labels.len() {
            return Err(Error::shape("labels", stack.samples(), labels.len()));
        }
        Ok(Labeled { stack, labels })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Mean attention weight per view on the validation set, when the model
    /// has an attention layer.
    pub attention: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }
}

/// Mean cross-entropy and accuracy of `model` on `data`.
pub fn evaluate_loss<M: ViewClassifier>(model: &M, data: Labeled<'_>) -> Result<(f64, f64)> {
    let logits = model.logits(data.stack)?;
    let (loss, _) = cross_entropy_loss(&logits, data.labels)?;
    let predicted = predict_from_logits(&logits).labels;
    let correct = predicted.iter().zip(data.labels).filter(|(p, t)| p == t).count();
    Ok((loss, correct as f64 / data.labels.len() as f64))
}

/// Trains `model` in place and leaves it at the epoch with the lowest
/// validation loss. An epoch improves only if its validation loss is
/// strictly lower than every earlier one.
pub fn train_classifier<M: ViewClassifier>(
    model: &mut M,
    train: Labeled<'_>,
    val: Labeled<'_>,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainHistory> {
    config.validate()?;
    if val.labels.is_empty() {
        return Err(Error::Usage("validation set is empty".into()));
    }
    if train.labels.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    let schedule = config.schedule();
    let mut opt = Optimizer::adam(1.0)?;
    let attention = model.attention_blocks();
    let scales: Option<Vec<f64>> = (attention > 0).then(|| {
        let blocks = model.params().len();
        (0..blocks)
            .map(|b| if b < attention { config.attention_lr_scale } else { 1.0 })
            .collect()
    });
    let mut history = TrainHistory::default();
    let mut best_loss = f64::INFINITY;
    let mut best_model = model.clone();
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        let lr = schedule.lr_at(epoch);
        opt.set_lr(lr);
        let mut total = 0.0;
        for batch in crate::augment::minibatches(train.labels.len(), config.batch_size, rng) {
            let stack = train.stack.select(&batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let (loss, grads) = model.loss_and_grad(&stack, &labels)?;
            opt.step_scaled(model, &grads, scales.as_deref())
                .map_err(|e| e.context(format!("classifier epoch {}", epoch + 1)))?;
            total += loss * batch.len() as f64;
        }
        let (val_loss, val_accuracy) = evaluate_loss(model, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "validation loss diverged at epoch {}",
                epoch + 1
            )));
        }
        let attention = model.attention_trace(val.stack)?.map(|t| t.mean_per_view());
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: total / train.labels.len() as f64,
            val_loss,
            val_accuracy,
            attention,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_model = model.clone();
            history.best_epoch = epoch + 1;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    *model = best_model;
    Ok(history)
}
