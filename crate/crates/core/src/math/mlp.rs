//! Feed-forward layer chains with hand-derived backpropagation.

use serde::{Deserialize, Serialize};

use super::layers::{Activation, LayerSpec};
use super::matrix::Matrix;
use super::params::{Gradients, Parameters};
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
enum Layer {
    Linear {
        weight: Matrix, // out × in
        bias: Vec<f64>,
    },
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        momentum: f64,
        eps: f64,
    },
    Dropout {
        rate: f64,
    },
    Activation(Activation),
}

#[derive(Clone, Debug)]
enum Saved {
    None,
    BatchNorm {
        xhat: Matrix,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
        batch: usize,
    },
    Mask(Matrix),
    Output(Matrix),
}

/// Everything `backward` needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    mode: Mode,
    inputs: Vec<Matrix>,
    saved: Vec<Saved>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// An ordered chain of layers with their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Builds and randomly initializes a chain. Linear weights and biases are
    /// drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(input_dim: usize, specs: Vec<LayerSpec>, rng: &mut Rng) -> Result<Self> {
        let mut mlp = Mlp::zeroed(input_dim, specs)?;
        for layer in &mut mlp.layers {
            if let Layer::Linear { weight, bias } = layer {
                let bound = 1.0 / (weight.cols() as f64).sqrt();
                for w in weight.data_mut() {
                    *w = rng.uniform_range(-bound, bound);
                }
                for b in bias.iter_mut() {
                    *b = rng.uniform_range(-bound, bound);
                }
            }
        }
        Ok(mlp)
    }

    /// Builds a chain with zero linear parameters and identity batch norms.
    pub fn zeroed(input_dim: usize, specs: Vec<LayerSpec>) -> Result<Self> {
        let mut width = input_dim;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            spec.validate()
                .map_err(|e| e.context(format!("layer {i} ({})", spec.describe())))?;
            width = spec.output_dim(width).map_err(|e| e.context(format!("layer {i}")))?;
            layers.push(match *spec {
                LayerSpec::Linear { in_dim, out_dim } => Layer::Linear {
                    weight: Matrix::zeros(out_dim, in_dim),
                    bias: vec![0.0; out_dim],
                },
                LayerSpec::BatchNorm { dim, momentum, eps } => Layer::BatchNorm {
                    gamma: vec![1.0; dim],
                    beta: vec![0.0; dim],
                    running_mean: vec![0.0; dim],
                    running_var: vec![1.0; dim],
                    momentum,
                    eps,
                },
                LayerSpec::Dropout { rate } => Layer::Dropout { rate },
                LayerSpec::Activation(a) => Layer::Activation(a),
            });
        }
        Ok(Mlp {
            input_dim,
            specs,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs
            .iter()
            .fold(self.input_dim, |w, s| s.output_dim(w).unwrap_or(w))
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Sets the weight and bias of the linear layer at `index`.
    pub fn set_linear(&mut self, index: usize, w: Matrix, b: Vec<f64>) -> Result<()> {
        match self.layers.get_mut(index) {
            Some(Layer::Linear { weight, bias }) => {
                if w.shape() != weight.shape() || b.len() != bias.len() {
                    return Err(Error::shape(
                        format!("layer {index} parameters"),
                        format!("{:?} + {}", weight.shape(), bias.len()),
                        format!("{:?} + {}", w.shape(), b.len()),
                    ));
                }
                *weight = w;
                *bias = b;
                Ok(())
            }
            _ => Err(Error::Usage(format!("layer {index} is not a linear layer"))),
        }
    }

    pub fn forward(&self, input: &Matrix, mode: Mode, rng: &mut Rng) -> Result<(Matrix, ForwardCache)> {
        if input.cols() != self.input_dim {
            return Err(Error::shape("mlp input", self.input_dim, input.cols()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut saved = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, s) = forward_layer(layer, &x, mode, rng)
                .map_err(|e| e.context(format!("layer {i} ({})", self.specs[i].describe())))?;
            inputs.push(x);
            saved.push(s);
            x = y;
        }
        Ok((x, ForwardCache { mode, inputs, saved }))
    }

    /// Deterministic inference pass.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        // Eval mode never draws from the generator.
        let mut rng = Rng::new(0);
        Ok(self.forward(input, Mode::Eval, &mut rng)?.0)
    }

    /// Exact gradients of the cached computation. The returned blocks follow
    /// [`Parameters::params`] order.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<(Matrix, Gradients)> {
        if cache.mode != Mode::Train {
            return Err(Error::Usage("backward requires a cache produced in Train mode".into()));
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Usage("cache does not belong to this network".into()));
        }
        let mut grads_rev: Vec<Vec<f64>> = Vec::new();
        let mut g = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let expected_out = self.specs[i].output_dim(x.cols())?;
            if g.shape() != (x.rows(), expected_out) {
                return Err(Error::shape(
                    format!("gradient into layer {i} ({})", self.specs[i].describe()),
                    format!("{}x{}", x.rows(), expected_out),
                    format!("{}x{}", g.rows(), g.cols()),
                ));
            }
            g = match (layer, &cache.saved[i]) {
                (Layer::Linear { weight, .. }, _) => {
                    let gw = g.t_matmul(x)?;
                    let gb = g.col_sums();
                    grads_rev.push(gb);
                    grads_rev.push(gw.into_data());
                    g.matmul(weight)?
                }
                (
                    Layer::BatchNorm { gamma, .. },
                    Saved::BatchNorm {
                        xhat, inv_std, batch, ..
                    },
                ) => {
                    let n = *batch as f64;
                    let cols = g.cols();
                    let mut dgamma = vec![0.0; cols];
                    let dbeta = g.col_sums();
                    for r in 0..g.rows() {
                        for (c, d) in dgamma.iter_mut().enumerate() {
                            *d += g.get(r, c) * xhat.get(r, c);
                        }
                    }
                    let mut dx = Matrix::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            // dxhat summed terms: sum(dxhat) = gamma*dbeta, sum(dxhat*xhat) = gamma*dgamma
                            let dxhat = g.get(r, c) * gamma[c];
                            let v = inv_std[c] / n
                                * (n * dxhat - gamma[c] * dbeta[c] - xhat.get(r, c) * gamma[c] * dgamma[c]);
                            dx.set(r, c, v);
                        }
                    }
                    grads_rev.push(dbeta);
                    grads_rev.push(dgamma);
                    dx
                }
                (Layer::Dropout { .. }, Saved::Mask(mask)) => g.hadamard(mask)?,
                (Layer::Dropout { .. }, Saved::None) => g,
                (Layer::Activation(a), Saved::Output(y)) => {
                    let mut dx = g;
                    for ((d, &xi), &yi) in dx.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                        *d *= a.derivative(xi, yi);
                    }
                    dx
                }
                _ => return Err(Error::Usage(format!("cache entry for layer {i} is inconsistent"))),
            };
        }
        grads_rev.reverse();
        Ok((g, Gradients::new(grads_rev)))
    }

    /// Folds the batch statistics recorded in a Train-mode cache into the
    /// batch-norm running averages.
    pub fn commit_batch_stats(&mut self, cache: &ForwardCache) {
        if cache.mode != Mode::Train {
            return;
        }
        for (layer, saved) in self.layers.iter_mut().zip(&cache.saved) {
            if let (
                Layer::BatchNorm {
                    running_mean,
                    running_var,
                    momentum,
                    ..
                },
                Saved::BatchNorm { mean, var, batch, .. },
            ) = (layer, saved)
            {
                let correction = if *batch > 1 {
                    *batch as f64 / (*batch as f64 - 1.0)
                } else {
                    1.0
                };
                for c in 0..mean.len() {
                    running_mean[c] = (1.0 - *momentum) * running_mean[c] + *momentum * mean[c];
                    running_var[c] = (1.0 - *momentum) * running_var[c] + *momentum * var[c] * correction;
                }
            }
        }
    }

    /// Non-trainable state (batch-norm running statistics), named.
    pub fn buffers(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::BatchNorm {
                running_mean,
                running_var,
                ..
            } = layer
            {
                out.push((format!("{i}.running_mean"), running_mean.as_slice()));
                out.push((format!("{i}.running_var"), running_var.as_slice()));
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Layer::BatchNorm {
                running_mean,
                running_var,
                ..
            } = layer
            {
                out.push((format!("{i}.running_mean"), running_mean));
                out.push((format!("{i}.running_var"), running_var));
            }
        }
        out
    }
}

fn forward_layer(layer: &Layer, x: &Matrix, mode: Mode, rng: &mut Rng) -> Result<(Matrix, Saved)> {
    Ok(match layer {
        Layer::Linear { weight, bias } => {
            let mut y = x.matmul_t(weight)?;
            y.add_row(bias)?;
            (y, Saved::None)
        }
        Layer::BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
            eps,
            ..
        } => {
            let (rows, cols) = x.shape();
            match mode {
                Mode::Train => {
                    if rows == 0 {
                        return Err(Error::Usage("batch norm in Train mode needs a non-empty batch".into()));
                    }
                    let n = rows as f64;
                    let mean: Vec<f64> = x.col_sums().into_iter().map(|s| s / n).collect();
                    let mut var = vec![0.0; cols];
                    for row in x.iter_rows() {
                        for c in 0..cols {
                            var[c] += (row[c] - mean[c]).powi(2);
                        }
                    }
                    for v in &mut var {
                        *v /= n;
                    }
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                    let mut xhat = Matrix::zeros(rows, cols);
                    let mut y = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            let h = (x.get(r, c) - mean[c]) * inv_std[c];
                            xhat.set(r, c, h);
                            y.set(r, c, gamma[c] * h + beta[c]);
                        }
                    }
                    (
                        y,
                        Saved::BatchNorm {
                            xhat,
                            inv_std,
                            mean,
                            var,
                            batch: rows,
                        },
                    )
                }
                Mode::Eval => {
                    let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                    let mut y = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            let h = (x.get(r, c) - running_mean[c]) * inv_std[c];
                            y.set(r, c, gamma[c] * h + beta[c]);
                        }
                    }
                    (y, Saved::None)
                }
            }
        }
        Layer::Dropout { rate } => {
            if mode == Mode::Eval || *rate == 0.0 {
                (x.clone(), Saved::None)
            } else {
                let keep = 1.0 - rate;
                let scale = if keep > 0.0 { 1.0 / keep } else { 0.0 };
                let mut mask = Matrix::zeros(x.rows(), x.cols());
                for m in mask.data_mut() {
                    *m = if rng.bernoulli(keep) { scale } else { 0.0 };
                }
                (x.hadamard(&mask)?, Saved::Mask(mask))
            }
        }
        Layer::Activation(a) => {
            let y = x.map(|v| a.apply(v));
            (y.clone(), Saved::Output(y))
        }
    })
}

impl Parameters for Mlp {
    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Linear { .. } => {
                    names.push(format!("{i}.weight"));
                    names.push(format!("{i}.bias"));
                }
                Layer::BatchNorm { .. } => {
                    names.push(format!("{i}.gamma"));
                    names.push(format!("{i}.beta"));
                }
                _ => {}
            }
        }
        names
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Linear { weight, bias } => {
                    out.push(weight.data());
                    out.push(bias.as_slice());
                }
                Layer::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                _ => {}
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Linear { weight, bias } => {
                    out.push(weight.data_mut());
                    out.push(bias.as_mut_slice());
                }
                Layer::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_mut_slice());
                    out.push(beta.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::layers::LayerSpec;

    fn rng() -> Rng {
        Rng::new(11)
    }

    #[test]
    fn identity_linear_passes_input_through() {
        let mut net = Mlp::zeroed(3, vec![LayerSpec::linear(3, 3)]).unwrap();
        net.set_linear(0, Matrix::identity(3), vec![0.0; 3]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let (y, _) = net.forward(&x, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let net = Mlp::zeroed(4, vec![LayerSpec::activation(Activation::Sigmoid)]).unwrap();
        let (y, _) = net.forward(&Matrix::zeros(2, 4), Mode::Eval, &mut rng()).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn linear_then_leaky_relu_hand_case() {
        let mut net = Mlp::zeroed(
            2,
            vec![LayerSpec::linear(2, 2), LayerSpec::activation(Activation::leaky())],
        )
        .unwrap();
        net.set_linear(0, Matrix::identity(2), vec![1.0, 1.0]).unwrap();
        let x = Matrix::from_rows(&[[-2.0, 3.0]]).unwrap();
        let (y, _) = net.forward(&x, Mode::Eval, &mut rng()).unwrap();
        assert!((y.get(0, 0) - (-0.01)).abs() < 1e-15);
        assert_eq!(y.get(0, 1), 4.0);
    }

    #[test]
    fn linear_gradient_of_sum() {
        let mut net = Mlp::zeroed(2, vec![LayerSpec::linear(2, 3)]).unwrap();
        let w = Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]).unwrap();
        net.set_linear(0, w, vec![0.0; 3]).unwrap();
        let x = Matrix::from_rows(&[[2.0, -1.0]]).unwrap();
        let (y, cache) = net.forward(&x, Mode::Train, &mut rng()).unwrap();
        let (_, grads) = net.backward(&cache, &Matrix::filled(1, y.cols(), 1.0)).unwrap();
        assert_eq!(grads.blocks[1], vec![1.0, 1.0, 1.0]);
        assert_eq!(grads.blocks[0], vec![2.0, -1.0, 2.0, -1.0, 2.0, -1.0]);
    }

    #[test]
    fn backward_rejects_eval_cache() {
        let net = Mlp::zeroed(2, vec![LayerSpec::linear(2, 2)]).unwrap();
        let (y, cache) = net.forward(&Matrix::zeros(1, 2), Mode::Eval, &mut rng()).unwrap();
        assert!(matches!(net.backward(&cache, &y), Err(Error::Usage(_))));
    }

    #[test]
    fn shape_error_names_the_layer() {
        let err = Mlp::zeroed(4, vec![LayerSpec::linear(4, 3), LayerSpec::linear(2, 1)]).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
        let net = Mlp::zeroed(4, vec![LayerSpec::linear(4, 3)]).unwrap();
        assert!(net.forward(&Matrix::zeros(1, 5), Mode::Eval, &mut rng()).is_err());
    }

    #[test]
    fn zero_rate_dropout_is_identity_both_ways() {
        let net = Mlp::zeroed(3, vec![LayerSpec::dropout(0.0)]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let (y, cache) = net.forward(&x, Mode::Train, &mut rng()).unwrap();
        assert_eq!(y, x);
        let g = Matrix::from_rows(&[[0.5, -1.0, 2.0]]).unwrap();
        let (gx, grads) = net.backward(&cache, &g).unwrap();
        assert_eq!(gx, g);
        assert!(grads.blocks.is_empty());
    }

    #[test]
    fn dropout_eval_is_exact_identity_and_train_preserves_mean() {
        let net = Mlp::zeroed(1000, vec![LayerSpec::dropout(0.3)]).unwrap();
        let x = Matrix::filled(20, 1000, 2.0);
        let (y, _) = net.forward(&x, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(y, x);
        let (y, _) = net.forward(&x, Mode::Train, &mut rng()).unwrap();
        let mean = y.sum() / y.data().len() as f64;
        assert!((mean - 2.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn batch_norm_normalizes_training_batches() {
        let net = Mlp::zeroed(5, vec![LayerSpec::batch_norm(5)]).unwrap();
        let mut r = rng();
        let rows: Vec<Vec<f64>> = (0..32)
            .map(|_| (0..5).map(|c| 3.0 * r.normal() + c as f64 * 10.0).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let (y, _) = net.forward(&x, Mode::Train, &mut r).unwrap();
        for c in 0..5 {
            let col: Vec<f64> = (0..32).map(|i| y.get(i, c)).collect();
            let mean = col.iter().sum::<f64>() / 32.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn running_stats_move_toward_batch_stats() {
        let mut net = Mlp::zeroed(1, vec![LayerSpec::batch_norm(1)]).unwrap();
        let x = Matrix::from_vec(4, 1, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let (_, cache) = net.forward(&x, Mode::Train, &mut rng()).unwrap();
        net.commit_batch_stats(&cache);
        let buffers = net.buffers();
        assert!((buffers[0].1[0] - 0.4).abs() < 1e-12);
        // unbiased batch variance 20/3, blended with the initial 1.0
        assert!((buffers[1].1[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
    }
}
