use serde::{Deserialize, Serialize};

use super::record::Dataset;
use crate::error::{Error, Result};
use crate::math::Matrix;

pub const DEFAULT_SCALER_EPSILON: f64 = 1e-12;

/// Per-dimension affine map into `[0, 1]`, fitted on training vectors only.
///
/// Values outside the fitted range are clamped. Dimensions whose fitted range
/// is below `epsilon` map to 0 and invert to their minimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub epsilon: f64,
}

impl MinMaxScaler {
    pub fn fit(vectors: &Matrix) -> Result<Self> {
        if vectors.rows() == 0 {
            return Err(Error::Usage("cannot fit a scaler on an empty dataset".into()));
        }
        let cols = vectors.cols();
        let mut min = vec![f64::INFINITY; cols];
        let mut max = vec![f64::NEG_INFINITY; cols];
        for row in vectors.iter_rows() {
            for c in 0..cols {
                min[c] = min[c].min(row[c]);
                max[c] = max[c].max(row[c]);
            }
        }
        Ok(MinMaxScaler {
            min,
            max,
            epsilon: DEFAULT_SCALER_EPSILON,
        })
    }

    pub fn dimension(&self) -> usize {
        self.min.len()
    }

    fn check(&self, vectors: &Matrix) -> Result<()> {
        if vectors.cols() != self.dimension() {
            return Err(Error::shape("min-max scaler", self.dimension(), vectors.cols()));
        }
        Ok(())
    }

    pub fn apply(&self, vectors: &Matrix) -> Result<Matrix> {
        self.check(vectors)?;
        let mut out = vectors.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                let range = self.max[c] - self.min[c];
                *v = if range < self.epsilon {
                    0.0
                } else {
                    ((*v - self.min[c]) / range).clamp(0.0, 1.0)
                };
            }
        }
        Ok(out)
    }

    pub fn invert(&self, scaled: &Matrix) -> Result<Matrix> {
        self.check(scaled)?;
        let mut out = scaled.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                let range = self.max[c] - self.min[c];
                *v = if range < self.epsilon {
                    self.min[c]
                } else {
                    self.min[c] + *v * range
                };
            }
        }
        Ok(out)
    }
}

pub fn fit_minmax(train: &Dataset) -> Result<MinMaxScaler> {
    MinMaxScaler::fit(&train.vectors())
}

pub fn apply_minmax(scaler: &MinMaxScaler, vectors: &Matrix) -> Result<Matrix> {
    scaler.apply(vectors)
}

pub fn invert_minmax(scaler: &MinMaxScaler, vectors: &Matrix) -> Result<Matrix> {
    scaler.invert(vectors)
}
