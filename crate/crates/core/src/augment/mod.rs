//! Generators of extra embedding views and their assembly into stacks.

pub mod autoencoder;
pub mod noise;
pub mod vae;
pub mod views;

pub use autoencoder::{
    corrupt, train_autoencoder, train_dae, AeConfig, AutoencoderModel, Corruption, DenoisingConfig, DenoisingModel,
    ReconstructionHistory,
};
pub use noise::{linear_transform, LinearNoiseConfig};
pub use vae::{reparameterize, train_vae, VaeConfig, VaeHistory, VaeLoss, VaeModel};
pub use views::{build_view_stack, ViewKind, ViewStack};

use crate::error::{Error, Result};
use crate::math::{Matrix, Rng};

/// Tolerated slack around `[0, 1]` before training data counts as unscaled.
const SCALED_SLACK: f64 = 0.01;

/// Models that map raw vectors to reconstructed vectors in the same space.
pub trait Reconstruct {
    fn input_dim(&self) -> usize;

    /// Scales `raw`, runs an eval-mode forward pass and maps the result back.
    fn reconstruct(&self, raw: &Matrix) -> Result<Matrix>;
}

pub fn reconstruct(model: &dyn Reconstruct, raw: &Matrix) -> Result<Matrix> {
    model.reconstruct(raw)
}

fn check_scaled(x: &Matrix) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::Usage("no training vectors".into()));
    }
    if let Some(v) = x
        .data()
        .iter()
        .find(|&&v| !(-SCALED_SLACK..=1.0 + SCALED_SLACK).contains(&v))
    {
        return Err(Error::Usage(format!(
            "training vectors must be min-max scaled to [0, 1]; found {v}"
        )));
    }
    Ok(())
}

/// Index batches covering `0..n` in a fresh random order.
pub fn minibatches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    rng.permutation(n)
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect()
}
