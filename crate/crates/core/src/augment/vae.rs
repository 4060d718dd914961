//! Variational autoencoder with a shared trunk and Gaussian latent heads.

use serde::{Deserialize, Serialize};

use super::{check_scaled, minibatches, Reconstruct};
use crate::checkpoint::{export_mlp, import_mlp, Checkpoint, Checkpointable};
use crate::data::MinMaxScaler;
use crate::error::{Error, Result};
use crate::math::{
    gaussian_kl_with_grad, mse_loss, prefixed_names, Activation, ForwardCache, Gradients, LayerSpec, Matrix, Mlp, Mode,
    Optimizer, Parameters, Rng,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub hidden: usize,
    pub latent: usize,
    pub dropout: f64,
    /// Weight of the KL term.
    pub beta: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            hidden: 512,
            latent: 256,
            dropout: 0.2,
            beta: 1.0,
            lr: 0.001,
            epochs: 50,
            batch_size: 64,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.latent == 0 {
            return Err(Error::Config("VAE widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("VAE dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("VAE beta {} must be non-negative", self.beta)));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("VAE lr and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// `z = mu + exp(log_var / 2) * eps`, elementwise.
pub fn reparameterize(mu: &Matrix, log_var: &Matrix, eps: &Matrix) -> Result<Matrix> {
    if mu.shape() != log_var.shape() {
        return Err(Error::shape(
            "reparameterize log_var",
            format!("{:?}", mu.shape()),
            format!("{:?}", log_var.shape()),
        ));
    }
    if mu.shape() != eps.shape() {
        return Err(Error::shape(
            "reparameterize eps",
            format!("{:?}", mu.shape()),
            format!("{:?}", eps.shape()),
        ));
    }
    let data = mu
        .data()
        .iter()
        .zip(log_var.data())
        .zip(eps.data())
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    Matrix::from_vec(mu.rows(), mu.cols(), data)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VaeLoss {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

pub type VaeHistory = Vec<VaeLoss>;

pub struct VaeCache {
    trunk: ForwardCache,
    mu_head: ForwardCache,
    log_var_head: ForwardCache,
    decoder: ForwardCache,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel {
    pub config: VaeConfig,
    trunk: Mlp,
    mu_head: Mlp,
    log_var_head: Mlp,
    decoder: Mlp,
    scaler: MinMaxScaler,
}

impl VaeModel {
    pub fn new(config: VaeConfig, scaler: MinMaxScaler, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let dim = scaler.dimension();
        let (h, l, p) = (config.hidden, config.latent, config.dropout);
        let trunk = Mlp::new(
            dim,
            vec![
                LayerSpec::linear(dim, h),
                LayerSpec::batch_norm(h),
                LayerSpec::activation(Activation::Relu),
                LayerSpec::dropout(p),
            ],
            rng,
        )?;
        let mu_head = Mlp::new(h, vec![LayerSpec::linear(h, l)], rng)?;
        let log_var_head = Mlp::new(h, vec![LayerSpec::linear(h, l)], rng)?;
        let decoder = Mlp::new(
            l,
            vec![
                LayerSpec::linear(l, h),
                LayerSpec::batch_norm(h),
                LayerSpec::activation(Activation::Relu),
                LayerSpec::dropout(p),
                LayerSpec::linear(h, dim),
                LayerSpec::activation(Activation::Sigmoid),
            ],
            rng,
        )?;
        Ok(VaeModel {
            config,
            trunk,
            mu_head,
            log_var_head,
            decoder,
            scaler,
        })
    }

    pub fn scaler(&self) -> &MinMaxScaler {
        &self.scaler
    }

    /// Posterior mean and log-variance of already scaled vectors (eval mode).
    pub fn encode(&self, scaled: &Matrix) -> Result<(Matrix, Matrix)> {
        let h = self.trunk.predict(scaled)?;
        Ok((self.mu_head.predict(&h)?, self.log_var_head.predict(&h)?))
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        self.decoder.predict(z)
    }

    /// Loss and gradients for one batch with a given standard-normal draw
    /// `eps` (batch × latent). Dropout masks come from `rng`.
    pub fn loss_and_grad(
        &self,
        input: &Matrix,
        eps: &Matrix,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(VaeLoss, Gradients, VaeCache)> {
        let (h, trunk) = self.trunk.forward(input, mode, rng)?;
        let (mu, mu_head) = self.mu_head.forward(&h, mode, rng)?;
        let (log_var, log_var_head) = self.log_var_head.forward(&h, mode, rng)?;
        let z = reparameterize(&mu, &log_var, eps)?;
        let (out, decoder) = self.decoder.forward(&z, mode, rng)?;

        let (reconstruction, grad_out) = mse_loss(&out, input)?;
        let (kl, grad_mu_kl, grad_lv_kl) = gaussian_kl_with_grad(&mu, &log_var)?;
        let beta = self.config.beta;
        let loss = VaeLoss {
            reconstruction,
            kl,
            total: reconstruction + beta * kl,
        };

        let (grad_z, dec) = self.decoder.backward(&decoder, &grad_out)?;
        let mut grad_mu = grad_z.clone();
        let mut grad_lv = grad_z;
        for i in 0..grad_mu.data().len() {
            let sigma = (0.5 * log_var.data()[i]).exp();
            grad_lv.data_mut()[i] *= 0.5 * sigma * eps.data()[i];
            grad_lv.data_mut()[i] += beta * grad_lv_kl.data()[i];
            grad_mu.data_mut()[i] += beta * grad_mu_kl.data()[i];
        }
        let (mut grad_h, mu_grads) = self.mu_head.backward(&mu_head, &grad_mu)?;
        let (grad_h_lv, lv_grads) = self.log_var_head.backward(&log_var_head, &grad_lv)?;
        grad_h.add_assign(&grad_h_lv)?;
        let (_, mut grads) = self.trunk.backward(&trunk, &grad_h)?;
        grads.extend(mu_grads);
        grads.extend(lv_grads);
        grads.extend(dec);
        let cache = VaeCache {
            trunk,
            mu_head,
            log_var_head,
            decoder,
        };
        Ok((loss, grads, cache))
    }

    /// Eval-mode loss of scaled vectors with a given draw `eps`.
    pub fn evaluate(&self, scaled: &Matrix, eps: &Matrix) -> Result<VaeLoss> {
        let (mu, log_var) = self.encode(scaled)?;
        let out = self.decode(&reparameterize(&mu, &log_var, eps)?)?;
        let (reconstruction, _) = mse_loss(&out, scaled)?;
        let (kl, _, _) = gaussian_kl_with_grad(&mu, &log_var)?;
        Ok(VaeLoss {
            reconstruction,
            kl,
            total: reconstruction + self.config.beta * kl,
        })
    }

    pub fn commit_batch_stats(&mut self, cache: &VaeCache) {
        self.trunk.commit_batch_stats(&cache.trunk);
        self.mu_head.commit_batch_stats(&cache.mu_head);
        self.log_var_head.commit_batch_stats(&cache.log_var_head);
        self.decoder.commit_batch_stats(&cache.decoder);
    }

    /// Reconstruction through a sampled latent instead of the mean; used to
    /// generate extra synthetic rows.
    pub fn reconstruct_sampled(&self, raw: &Matrix, rng: &mut Rng) -> Result<Matrix> {
        let scaled = self.scaler.apply(raw).map_err(|e| e.context("VAE input"))?;
        let (mu, log_var) = self.encode(&scaled)?;
        let eps = standard_normal(mu.rows(), mu.cols(), rng);
        let z = reparameterize(&mu, &log_var, &eps)?;
        self.scaler.invert(&self.decode(&z)?)
    }
}

fn standard_normal(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

impl Parameters for VaeModel {
    fn param_names(&self) -> Vec<String> {
        let mut names = prefixed_names("trunk", &self.trunk);
        names.extend(prefixed_names("mu_head", &self.mu_head));
        names.extend(prefixed_names("log_var_head", &self.log_var_head));
        names.extend(prefixed_names("decoder", &self.decoder));
        names
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.trunk.params();
        p.extend(self.mu_head.params());
        p.extend(self.log_var_head.params());
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.trunk.params_mut();
        p.extend(self.mu_head.params_mut());
        p.extend(self.log_var_head.params_mut());
        p.extend(self.decoder.params_mut());
        p
    }
}

impl Reconstruct for VaeModel {
    fn input_dim(&self) -> usize {
        self.scaler.dimension()
    }

    /// Decodes the posterior mean, so the view is deterministic.
    fn reconstruct(&self, raw: &Matrix) -> Result<Matrix> {
        let scaled = self.scaler.apply(raw).map_err(|e| e.context("VAE input"))?;
        let (mu, _) = self.encode(&scaled)?;
        self.scaler.invert(&self.decode(&mu)?)
    }
}

impl Checkpointable for VaeModel {
    const KIND: &'static str = "vae";

    fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new(Self::KIND);
        ckpt.set_meta("config", &self.config)?;
        ckpt.set_meta("scaler", &self.scaler)?;
        export_mlp(&mut ckpt, "trunk", &self.trunk)?;
        export_mlp(&mut ckpt, "mu_head", &self.mu_head)?;
        export_mlp(&mut ckpt, "log_var_head", &self.log_var_head)?;
        export_mlp(&mut ckpt, "decoder", &self.decoder)?;
        Ok(ckpt)
    }

    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(VaeModel {
            config: ckpt.meta("config")?,
            scaler: ckpt.meta("scaler")?,
            trunk: import_mlp(ckpt, "trunk")?,
            mu_head: import_mlp(ckpt, "mu_head")?,
            log_var_head: import_mlp(ckpt, "log_var_head")?,
            decoder: import_mlp(ckpt, "decoder")?,
        })
    }
}

/// Trains a VAE on scaled vectors. History holds the per-epoch means of the
/// training-mode batch losses.
pub fn train_vae(
    train: &Matrix,
    scaler: MinMaxScaler,
    config: &VaeConfig,
    rng: &mut Rng,
) -> Result<(VaeModel, VaeHistory)> {
    check_scaled(train)?;
    let mut model = VaeModel::new(config.clone(), scaler, rng)?;
    if train.cols() != model.input_dim() {
        return Err(Error::shape("VAE training data", model.input_dim(), train.cols()));
    }
    let mut opt = Optimizer::adam(config.lr)?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut sums = VaeLoss::default();
        for batch in minibatches(train.rows(), config.batch_size, rng) {
            let x = train.select_rows(&batch);
            let eps = standard_normal(x.rows(), config.latent, rng);
            let (loss, grads, cache) = model.loss_and_grad(&x, &eps, Mode::Train, rng)?;
            opt.step(&mut model, &grads)
                .map_err(|e| e.context(format!("VAE epoch {}", epoch + 1)))?;
            model.commit_batch_stats(&cache);
            let w = batch.len() as f64;
            sums.reconstruction += w * loss.reconstruction;
            sums.kl += w * loss.kl;
            sums.total += w * loss.total;
        }
        let n = train.rows() as f64;
        history.push(VaeLoss {
            reconstruction: sums.reconstruction / n,
            kl: sums.kl / n,
            total: sums.total / n,
        });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reparameterize_cases() {
        let mu = Matrix::row_vector(&[1.0, 2.0]);
        let z = reparameterize(&mu, &Matrix::zeros(1, 2), &Matrix::row_vector(&[0.5, -0.5])).unwrap();
        assert_eq!(z.data(), &[1.5, 1.5]);
        let z = reparameterize(&mu, &Matrix::row_vector(&[0.3, -2.0]), &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(z, mu);
        let z = reparameterize(
            &Matrix::row_vector(&[0.0]),
            &Matrix::row_vector(&[4f64.ln()]),
            &Matrix::row_vector(&[1.0]),
        )
        .unwrap();
        assert!((z.data()[0] - 2.0).abs() < 1e-15);
        assert!(matches!(
            reparameterize(&mu, &Matrix::zeros(1, 3), &Matrix::zeros(1, 2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn eval_reconstruction_is_deterministic() {
        let mut rng = Rng::new(2);
        let raw = Matrix::from_vec(10, 4, (0..40).map(|_| rng.normal()).collect()).unwrap();
        let scaler = MinMaxScaler::fit(&raw).unwrap();
        let cfg = VaeConfig {
            hidden: 8,
            latent: 3,
            epochs: 2,
            batch_size: 4,
            ..VaeConfig::default()
        };
        let (model, history) = train_vae(&scaler.apply(&raw).unwrap(), scaler, &cfg, &mut rng).unwrap();
        assert_eq!(history.len(), 2);
        assert_eq!(model.reconstruct(&raw).unwrap(), model.reconstruct(&raw).unwrap());
        let back = VaeModel::from_checkpoint(&model.to_checkpoint().unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn negative_beta_rejected() {
        let cfg = VaeConfig {
            beta: -1.0,
            ..VaeConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
