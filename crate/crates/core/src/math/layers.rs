use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;
pub const DEFAULT_BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Declarative description of one layer in a feed-forward chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear { in_dim: usize, out_dim: usize },
    BatchNorm { dim: usize, momentum: f64, eps: f64 },
    Dropout { rate: f64 },
    Activation(Activation),
}

impl LayerSpec {
    pub fn linear(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec::Linear { in_dim, out_dim }
    }

    pub fn batch_norm(dim: usize) -> Self {
        LayerSpec::BatchNorm {
            dim,
            momentum: DEFAULT_BN_MOMENTUM,
            eps: DEFAULT_BN_EPS,
        }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate }
    }

    pub fn activation(a: Activation) -> Self {
        LayerSpec::Activation(a)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Linear { in_dim, out_dim } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err(Error::Config(format!(
                        "linear layer needs positive dimensions, got {in_dim}->{out_dim}"
                    )));
                }
            }
            LayerSpec::BatchNorm { dim, momentum, eps } => {
                if dim == 0 || !(0.0..=1.0).contains(&momentum) || eps <= 0.0 {
                    return Err(Error::Config(format!(
                        "batch norm needs dim > 0, momentum in [0,1], eps > 0 (dim {dim}, momentum {momentum}, eps {eps})"
                    )));
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..=1.0).contains(&rate) {
                    return Err(Error::Config(format!("dropout rate {rate} outside [0,1]")));
                }
            }
            LayerSpec::Activation(Activation::LeakyRelu { slope }) => {
                if slope.is_nan() || slope <= 0.0 {
                    return Err(Error::Config(format!("leaky relu slope must be > 0, got {slope}")));
                }
            }
            LayerSpec::Activation(_) => {}
        }
        Ok(())
    }

    /// Output width given an input width, or an error if the layer cannot accept it.
    pub fn output_dim(&self, input_dim: usize) -> Result<usize> {
        match *self {
            LayerSpec::Linear { in_dim, out_dim } => {
                if in_dim != input_dim {
                    return Err(Error::shape(self.describe(), in_dim, input_dim));
                }
                Ok(out_dim)
            }
            LayerSpec::BatchNorm { dim, .. } => {
                if dim != input_dim {
                    return Err(Error::shape(self.describe(), dim, input_dim));
                }
                Ok(dim)
            }
            LayerSpec::Dropout { .. } | LayerSpec::Activation(_) => Ok(input_dim),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LayerSpec::Linear { in_dim, out_dim } => format!("Linear({in_dim}->{out_dim})"),
            LayerSpec::BatchNorm { dim, .. } => format!("BatchNorm({dim})"),
            LayerSpec::Dropout { rate } => format!("Dropout({rate})"),
            LayerSpec::Activation(a) => format!("{a:?}"),
        }
    }
}

/// Linear → BatchNorm → activation → Dropout, the block used by every augmenter.
pub fn dense_block(in_dim: usize, out_dim: usize, activation: Activation, dropout: f64) -> Vec<LayerSpec> {
    let mut block = vec![
        LayerSpec::linear(in_dim, out_dim),
        LayerSpec::batch_norm(out_dim),
        LayerSpec::activation(activation),
    ];
    if dropout > 0.0 {
        block.push(LayerSpec::dropout(dropout));
    }
    block
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(LayerSpec::dropout(1.5).validate().is_err());
        assert!(LayerSpec::linear(0, 3).validate().is_err());
        assert!(LayerSpec::activation(Activation::LeakyRelu { slope: 0.0 })
            .validate()
            .is_err());
        assert!(LayerSpec::dropout(0.2).validate().is_ok());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
