use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Matrix, Rng};

/// Bounds of the additive uniform noise, in raw embedding units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearNoiseConfig {
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for LinearNoiseConfig {
    fn default() -> Self {
        LinearNoiseConfig {
            r_min: -0.05,
            r_max: 0.05,
        }
    }
}

impl LinearNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min.is_finite() && self.r_max.is_finite()) {
            return Err(Error::Config("noise bounds must be finite".into()));
        }
        if self.r_min > self.r_max {
            return Err(Error::Config(format!(
                "noise bounds reversed: r_min {} > r_max {}",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }
}

/// Adds independent `U(r_min, r_max)` noise to every component.
pub fn linear_transform(vectors: &Matrix, config: &LinearNoiseConfig, rng: &mut Rng) -> Result<Matrix> {
    config.validate()?;
    let mut out = vectors.clone();
    for v in out.data_mut() {
        *v += rng.uniform_range(config.r_min, config.r_max);
    }
    Ok(out)
}
