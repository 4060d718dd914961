//! Multinomial logistic regression.

use serde::{Deserialize, Serialize};

use super::lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsResult};
use crate::error::{Error, Result};
use crate::math::{cross_entropy_loss, Gradients, Matrix, Parameters, Rng};

pub const DEFAULT_L2: f64 = 1e-4;

/// Weights `K × F`, bias `K`. The objective is mean cross-entropy plus
/// `l2 / 2 · ||W||²`; the bias is not penalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub l2: f64,
}

impl SoftmaxModel {
    pub fn zeros(num_classes: usize, feature_dim: usize, l2: f64) -> Result<Self> {
        if num_classes == 0 || feature_dim == 0 {
            return Err(Error::Config("softmax model needs classes and features".into()));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::Config(format!("l2 {l2} must be non-negative")));
        }
        Ok(SoftmaxModel {
            weights: Matrix::zeros(num_classes, feature_dim),
            bias: vec![0.0; num_classes],
            l2,
        })
    }

    /// Small random weights from `U(±1/sqrt(F))`.
    pub fn random(num_classes: usize, feature_dim: usize, l2: f64, rng: &mut Rng) -> Result<Self> {
        let mut m = SoftmaxModel::zeros(num_classes, feature_dim, l2)?;
        let bound = 1.0 / (feature_dim as f64).sqrt();
        for w in m.weights.data_mut() {
            *w = rng.uniform_range(-bound, bound);
        }
        Ok(m)
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.feature_dim() {
            return Err(Error::shape("softmax features", self.feature_dim(), features.cols()));
        }
        let mut z = features.matmul_t(&self.weights)?;
        z.add_row(&self.bias)?;
        Ok(z)
    }

    pub fn penalty(&self) -> f64 {
        0.5 * self.l2 * self.weights.data().iter().map(|w| w * w).sum::<f64>()
    }

    /// Parameter gradients and feature gradient for a given logit gradient,
    /// including the penalty term.
    pub fn backward(&self, features: &Matrix, grad_logits: &Matrix) -> Result<(Gradients, Matrix)> {
        let mut gw = grad_logits.t_matmul(features)?;
        for (g, w) in gw.data_mut().iter_mut().zip(self.weights.data()) {
            *g += self.l2 * w;
        }
        let grad_features = grad_logits.matmul(&self.weights)?;
        Ok((
            Gradients::new(vec![gw.into_data(), grad_logits.col_sums()]),
            grad_features,
        ))
    }

    pub fn objective(&self, features: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
        let logits = self.logits(features)?;
        let (ce, grad) = cross_entropy_loss(&logits, labels)?;
        let (grads, _) = self.backward(features, &grad)?;
        Ok((ce + self.penalty(), grads))
    }
}

impl Parameters for SoftmaxModel {
    fn param_names(&self) -> Vec<String> {
        vec!["weights".into(), "bias".into()]
    }

    fn params(&self) -> Vec<&[f64]> {
        vec![self.weights.data(), &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.data_mut(), &mut self.bias]
    }
}

/// Gradient norm accepted as converged when the line search stalls on
/// rounding noise before reaching the configured tolerance.
pub const STALL_GRADIENT_NORM: f64 = 1e-6;

/// Fits the model by L-BFGS starting from `init` (zeros when `None`).
pub fn train_softmax(
    features: &Matrix,
    labels: &[usize],
    num_classes: usize,
    l2: f64,
    config: &LbfgsConfig,
    init: Option<SoftmaxModel>,
) -> Result<(SoftmaxModel, LbfgsResult)> {
    if !features.is_finite() {
        return Err(Error::Validation("softmax features contain non-finite values".into()));
    }
    let mut model = match init {
        Some(m) => {
            if m.num_classes() != num_classes || m.feature_dim() != features.cols() {
                return Err(Error::shape(
                    "softmax initial model",
                    format!("{num_classes}×{}", features.cols()),
                    format!("{}×{}", m.num_classes(), m.feature_dim()),
                ));
            }
            SoftmaxModel { l2, ..m }
        }
        None => SoftmaxModel::zeros(num_classes, features.cols(), l2)?,
    };
    let x0 = crate::math::flatten_params(&model);
    let mut scratch = model.clone();
    let mut failure = None;
    let objective = |x: &[f64]| {
        crate::math::assign_flat(&mut scratch, x).expect("flat length matches");
        match scratch.objective(features, labels) {
            Ok((f, g)) => (f, g.blocks.concat()),
            Err(e) => {
                failure.get_or_insert(e);
                (f64::NAN, vec![f64::NAN; x.len()])
            }
        }
    };
    let result = match lbfgs_minimize(objective, &x0, config) {
        Ok(r) => r,
        Err(Error::LineSearch {
            iterations,
            grad_norm,
            last_iterate,
        }) if failure.is_none() && grad_norm < STALL_GRADIENT_NORM => {
            crate::math::assign_flat(&mut model, &last_iterate)?;
            let (value, _) = model.objective(features, labels)?;
            LbfgsResult {
                x: last_iterate,
                value,
                iterations,
                grad_norm,
                converged: false,
                trajectory: Vec::new(),
            }
        }
        Err(e) => return Err(failure.unwrap_or(e)),
    };
    if let Some(e) = failure {
        return Err(e);
    }
    crate::math::assign_flat(&mut model, &result.x)?;
    Ok((model, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::softmax_rows;

    #[test]
    fn zero_model_is_uniform() {
        let m = SoftmaxModel::zeros(3, 2, 0.0).unwrap();
        let p = softmax_rows(&m.logits(&Matrix::filled(4, 2, 7.0)).unwrap());
        assert!(p.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn separable_points_are_fit_exactly() {
        let pts = [[0.0, 0.0], [1.0, 0.2], [0.2, 1.0], [3.0, 3.0], [4.0, 2.5], [2.5, 4.0]];
        let labels = [0, 0, 0, 1, 1, 1];
        let x = Matrix::from_rows(&pts).unwrap();
        let (model, result) = train_softmax(&x, &labels, 2, 1e-4, &LbfgsConfig::default(), None).unwrap();
        assert!(result.grad_norm < 1e-6);
        let logits = model.logits(&x).unwrap();
        for (r, &l) in labels.iter().enumerate() {
            let row = logits.row(r);
            assert_eq!(if row[1] > row[0] { 1 } else { 0 }, l);
        }
    }

    #[test]
    fn convex_objective_ignores_initialization() {
        let mut rng = Rng::new(3);
        let x = Matrix::from_vec(40, 3, (0..120).map(|_| rng.normal()).collect()).unwrap();
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let cfg = LbfgsConfig::default();
        let (_, a) = train_softmax(&x, &labels, 3, 0.1, &cfg, None).unwrap();
        let init = SoftmaxModel::random(3, 3, 0.1, &mut rng).unwrap();
        let (_, b) = train_softmax(&x, &labels, 3, 0.1, &cfg, Some(init)).unwrap();
        assert!((a.value - b.value).abs() < 1e-8);
    }
}
