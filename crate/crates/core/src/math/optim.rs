use serde::{Deserialize, Serialize};

use super::params::{Gradients, Parameters};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer with lazily allocated moment buffers.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Optimizer {
            kind,
            lr,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn adam(lr: f64) -> Result<Self> {
        Optimizer::new(OptimizerKind::adam(), lr)
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Optimizer::new(OptimizerKind::Sgd, lr)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Changes the step size, e.g. from a schedule. Zero is allowed here so a
    /// schedule can fully freeze training.
    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step<P: Parameters + ?Sized>(&mut self, model: &mut P, grads: &Gradients) -> Result<()> {
        self.step_scaled(model, grads, None)
    }

    /// One update where block `b` uses `lr * scales[b]`.
    pub fn step_scaled<P: Parameters + ?Sized>(
        &mut self,
        model: &mut P,
        grads: &Gradients,
        scales: Option<&[f64]>,
    ) -> Result<()> {
        grads.check_matches(model)?;
        let names = model.param_names();
        for (name, block) in names.iter().zip(&grads.blocks) {
            if block.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("gradient of parameter {name}")));
            }
        }
        if let Some(s) = scales {
            if s.len() != grads.blocks.len() {
                return Err(Error::shape("learning-rate scales", grads.blocks.len(), s.len()));
            }
        }
        if self.first.is_empty() {
            self.first = grads.blocks.iter().map(|b| vec![0.0; b.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let mut params = model.params_mut();
        for (b, (p, g)) in params.iter_mut().zip(&grads.blocks).enumerate() {
            let lr = self.lr * scales.map_or(1.0, |s| s[b]);
            match self.kind {
                OptimizerKind::Sgd => {
                    for (pi, gi) in p.iter_mut().zip(g) {
                        *pi -= lr * gi;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let t = self.step as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let m = &mut self.first[b];
                    let v = &mut self.second[b];
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// `lr(epoch) = initial_lr * gamma^floor(epoch / step_size)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDecaySchedule {
    pub initial_lr: f64,
    pub step_size: usize,
    pub gamma: f64,
}

impl Default for StepDecaySchedule {
    fn default() -> Self {
        StepDecaySchedule {
            initial_lr: 0.001,
            step_size: 5,
            gamma: 0.5,
        }
    }
}

impl StepDecaySchedule {
    pub fn validate(&self) -> Result<()> {
        if self.initial_lr < 0.0 || !self.initial_lr.is_finite() {
            return Err(Error::Config(format!("initial lr {} must be >= 0", self.initial_lr)));
        }
        if self.step_size == 0 {
            return Err(Error::Config("step_size must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        step_decay_lr(self, epoch)
    }
}

pub fn step_decay_lr(schedule: &StepDecaySchedule, epoch: usize) -> f64 {
    let decays = (epoch / schedule.step_size.max(1)) as i32;
    schedule.initial_lr * schedule.gamma.powi(decays)
}
