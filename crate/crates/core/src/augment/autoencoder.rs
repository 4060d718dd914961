//! Autoencoder and denoising autoencoder trained on min-max scaled vectors.

use serde::{Deserialize, Serialize};

use super::{check_scaled, minibatches, Reconstruct};
use crate::checkpoint::{export_mlp, import_mlp, Checkpoint, Checkpointable};
use crate::data::MinMaxScaler;
use crate::error::{Error, Result};
use crate::math::layers::dense_block;
use crate::math::{
    mse_loss, prefixed_names, Activation, ForwardCache, Gradients, LayerSpec, Matrix, Mlp, Mode, Optimizer, Parameters,
    Rng,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeConfig {
    /// Encoder widths between input and latent; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            hidden: vec![384, 128],
            latent: 32,
            dropout: 0.2,
            lr: 0.001,
            epochs: 50,
            batch_size: 64,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("autoencoder widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "autoencoder dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("autoencoder lr and batch_size must be positive".into()));
        }
        Ok(())
    }

    fn encoder_specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut prev = input_dim;
        for &w in &self.hidden {
            specs.extend(dense_block(prev, w, Activation::leaky(), self.dropout));
            prev = w;
        }
        specs.push(LayerSpec::linear(prev, self.latent));
        specs
    }

    fn decoder_specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut prev = self.latent;
        for &w in self.hidden.iter().rev() {
            specs.extend(dense_block(prev, w, Activation::leaky(), self.dropout));
            prev = w;
        }
        specs.push(LayerSpec::linear(prev, input_dim));
        specs.push(LayerSpec::activation(Activation::Sigmoid));
        specs
    }
}

/// How the denoising autoencoder damages its input. Applied in scaled space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Corruption {
    GaussianAdditive {
        sigma: f64,
    },
    /// Each component is zeroed with probability `rate`.
    Masking {
        rate: f64,
    },
}

impl Default for Corruption {
    fn default() -> Self {
        Corruption::GaussianAdditive { sigma: 0.1 }
    }
}

impl Corruption {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Corruption::GaussianAdditive { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::Config(format!("corruption sigma {sigma} must be non-negative")))
            }
            Corruption::Masking { rate } if !(0.0..1.0).contains(&rate) => {
                Err(Error::Config(format!("masking rate {rate} outside [0, 1)")))
            }
            _ => Ok(()),
        }
    }
}

pub fn corrupt(batch: &Matrix, corruption: &Corruption, rng: &mut Rng) -> Matrix {
    let mut out = batch.clone();
    match *corruption {
        Corruption::GaussianAdditive { sigma } => {
            for v in out.data_mut() {
                *v += sigma * rng.normal();
            }
        }
        Corruption::Masking { rate } => {
            for v in out.data_mut() {
                if rng.bernoulli(rate) {
                    *v = 0.0;
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct DenoisingConfig {
    pub corruption: Corruption,
    pub autoencoder: AeConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeEpoch {
    /// Mean training-mode batch loss.
    pub train_loss: f64,
    /// Eval-mode reconstruction MSE on the whole training set after the epoch.
    pub eval_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionHistory {
    pub initial_loss: f64,
    pub epochs: Vec<AeEpoch>,
}

impl ReconstructionHistory {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_loss, |e| e.eval_loss)
    }
}

pub struct AeCache {
    encoder: ForwardCache,
    decoder: ForwardCache,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderModel {
    pub config: AeConfig,
    encoder: Mlp,
    decoder: Mlp,
    scaler: MinMaxScaler,
}

impl AutoencoderModel {
    pub fn new(config: AeConfig, scaler: MinMaxScaler, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let dim = scaler.dimension();
        let encoder = Mlp::new(dim, config.encoder_specs(dim), rng)?;
        let decoder = Mlp::new(config.latent, config.decoder_specs(dim), rng)?;
        Ok(AutoencoderModel {
            config,
            encoder,
            decoder,
            scaler,
        })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn scaler(&self) -> &MinMaxScaler {
        &self.scaler
    }

    pub fn forward(&self, input: &Matrix, mode: Mode, rng: &mut Rng) -> Result<(Matrix, AeCache)> {
        let (z, encoder) = self.encoder.forward(input, mode, rng)?;
        let (out, decoder) = self.decoder.forward(&z, mode, rng)?;
        Ok((out, AeCache { encoder, decoder }))
    }

    pub fn backward(&self, cache: &AeCache, grad_output: &Matrix) -> Result<Gradients> {
        let (grad_z, dec) = self.decoder.backward(&cache.decoder, grad_output)?;
        let (_, mut grads) = self.encoder.backward(&cache.encoder, &grad_z)?;
        grads.extend(dec);
        Ok(grads)
    }

    /// MSE between the reconstruction of `input` and `target`, with gradients.
    pub fn loss_and_grad(
        &self,
        input: &Matrix,
        target: &Matrix,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(f64, Gradients, AeCache)> {
        let (out, cache) = self.forward(input, mode, rng)?;
        let (loss, grad) = mse_loss(&out, target)?;
        let grads = self.backward(&cache, &grad)?;
        Ok((loss, grads, cache))
    }

    pub fn commit_batch_stats(&mut self, cache: &AeCache) {
        self.encoder.commit_batch_stats(&cache.encoder);
        self.decoder.commit_batch_stats(&cache.decoder);
    }

    /// Eval-mode reconstruction of already scaled vectors.
    pub fn reconstruct_scaled(&self, scaled: &Matrix) -> Result<Matrix> {
        let z = self.encoder.predict(scaled)?;
        self.decoder.predict(&z)
    }

    pub fn eval_loss(&self, scaled: &Matrix) -> Result<f64> {
        Ok(mse_loss(&self.reconstruct_scaled(scaled)?, scaled)?.0)
    }

    fn fit(&mut self, train: &Matrix, corruption: Option<&Corruption>, rng: &mut Rng) -> Result<ReconstructionHistory> {
        check_scaled(train)?;
        if train.cols() != self.scaler.dimension() {
            return Err(Error::shape(
                "autoencoder training data",
                self.scaler.dimension(),
                train.cols(),
            ));
        }
        let mut noise = rng.fork_named("corruption");
        let mut opt = Optimizer::adam(self.config.lr)?;
        let mut history = ReconstructionHistory {
            initial_loss: self.eval_loss(train)?,
            epochs: Vec::with_capacity(self.config.epochs),
        };
        for epoch in 0..self.config.epochs {
            let mut total = 0.0;
            for batch in minibatches(train.rows(), self.config.batch_size, rng) {
                let clean = train.select_rows(&batch);
                let input = match corruption {
                    Some(c) => corrupt(&clean, c, &mut noise),
                    None => clean.clone(),
                };
                let (loss, grads, cache) = self.loss_and_grad(&input, &clean, Mode::Train, rng)?;
                opt.step(self, &grads)
                    .map_err(|e| e.context(format!("autoencoder epoch {}", epoch + 1)))?;
                self.commit_batch_stats(&cache);
                total += loss * batch.len() as f64;
            }
            history.epochs.push(AeEpoch {
                train_loss: total / train.rows() as f64,
                eval_loss: self.eval_loss(train)?,
            });
        }
        Ok(history)
    }
}

impl Parameters for AutoencoderModel {
    fn param_names(&self) -> Vec<String> {
        let mut names = prefixed_names("encoder", &self.encoder);
        names.extend(prefixed_names("decoder", &self.decoder));
        names
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }
}

impl Reconstruct for AutoencoderModel {
    fn input_dim(&self) -> usize {
        self.scaler.dimension()
    }

    fn reconstruct(&self, raw: &Matrix) -> Result<Matrix> {
        let scaled = self.scaler.apply(raw).map_err(|e| e.context("autoencoder input"))?;
        self.scaler.invert(&self.reconstruct_scaled(&scaled)?)
    }
}

impl Checkpointable for AutoencoderModel {
    const KIND: &'static str = "autoencoder";

    fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new(Self::KIND);
        ckpt.set_meta("config", &self.config)?;
        ckpt.set_meta("scaler", &self.scaler)?;
        export_mlp(&mut ckpt, "encoder", &self.encoder)?;
        export_mlp(&mut ckpt, "decoder", &self.decoder)?;
        Ok(ckpt)
    }

    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(AutoencoderModel {
            config: ckpt.meta("config")?,
            scaler: ckpt.meta("scaler")?,
            encoder: import_mlp(ckpt, "encoder")?,
            decoder: import_mlp(ckpt, "decoder")?,
        })
    }
}

/// Trains an autoencoder on vectors already mapped into `[0, 1]` by `scaler`.
pub fn train_autoencoder(
    train: &Matrix,
    scaler: MinMaxScaler,
    config: &AeConfig,
    rng: &mut Rng,
) -> Result<(AutoencoderModel, ReconstructionHistory)> {
    let mut model = AutoencoderModel::new(config.clone(), scaler, rng)?;
    let history = model.fit(train, None, rng)?;
    Ok((model, history))
}

/// An autoencoder trained to recover clean inputs from corrupted ones.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoisingModel {
    pub autoencoder: AutoencoderModel,
    pub corruption: Corruption,
}

impl Reconstruct for DenoisingModel {
    fn input_dim(&self) -> usize {
        self.autoencoder.input_dim()
    }

    fn reconstruct(&self, raw: &Matrix) -> Result<Matrix> {
        self.autoencoder.reconstruct(raw)
    }
}

impl Checkpointable for DenoisingModel {
    const KIND: &'static str = "denoising-autoencoder";

    fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = self.autoencoder.to_checkpoint()?;
        ckpt.kind = Self::KIND.to_string();
        ckpt.set_meta("corruption", &self.corruption)?;
        Ok(ckpt)
    }

    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(DenoisingModel {
            autoencoder: AutoencoderModel::from_checkpoint(ckpt)?,
            corruption: ckpt.meta("corruption")?,
        })
    }
}

/// Like [`train_autoencoder`], but each batch is corrupted before encoding
/// while the loss still targets the clean batch. Corruption noise comes from
/// a stream forked off `rng`, so every other draw matches plain training.
pub fn train_dae(
    train: &Matrix,
    scaler: MinMaxScaler,
    config: &DenoisingConfig,
    rng: &mut Rng,
) -> Result<(DenoisingModel, ReconstructionHistory)> {
    config.corruption.validate()?;
    let mut autoencoder = AutoencoderModel::new(config.autoencoder.clone(), scaler, rng)?;
    let history = autoencoder.fit(train, Some(&config.corruption), rng)?;
    Ok((
        DenoisingModel {
            autoencoder,
            corruption: config.corruption,
        },
        history,
    ))
}
