//! Single-layer LSTM over a sequence of vectors, with a linear output head
//! on the final hidden state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::layers::sigmoid;
use crate::math::{Gradients, Matrix, Parameters, Rng};

pub const DEFAULT_HIDDEN_DIM: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmShape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

/// Gate blocks are stacked row-wise in the order input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    shape: LstmShape,
    /// 4H × D
    w_input: Matrix,
    /// 4H × H
    w_recurrent: Matrix,
    /// 4H
    bias: Vec<f64>,
    /// K × H
    head_weight: Matrix,
    /// K
    head_bias: Vec<f64>,
}

/// Per-timestep values kept for backpropagation through time.
#[derive(Clone, Debug)]
struct Step {
    h_prev: Matrix,
    c_prev: Matrix,
    /// Activated gates, n × 4H.
    gates: Matrix,
    tanh_c: Matrix,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    steps: Vec<Step>,
    final_hidden: Matrix,
}

impl LstmCache {
    pub fn final_hidden(&self) -> &Matrix {
        &self.final_hidden
    }
}

impl Lstm {
    /// Weights drawn from `U(±1/sqrt(hidden_dim))`; biases zero except the
    /// forget gate, which starts at 1.
    pub fn new(shape: LstmShape, rng: &mut Rng) -> Result<Self> {
        let mut lstm = Lstm::zeroed(shape)?;
        let bound = 1.0 / (shape.hidden_dim as f64).sqrt();
        for block in [&mut lstm.w_input, &mut lstm.w_recurrent, &mut lstm.head_weight] {
            for v in block.data_mut() {
                *v = rng.uniform_range(-bound, bound);
            }
        }
        let h = shape.hidden_dim;
        lstm.bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        Ok(lstm)
    }

    pub fn zeroed(shape: LstmShape) -> Result<Self> {
        let LstmShape {
            input_dim: d,
            hidden_dim: h,
            num_classes: k,
        } = shape;
        if d == 0 || h == 0 || k == 0 {
            return Err(Error::Config(format!("LSTM dimensions must be positive: {shape:?}")));
        }
        Ok(Lstm {
            shape,
            w_input: Matrix::zeros(4 * h, d),
            w_recurrent: Matrix::zeros(4 * h, h),
            bias: vec![0.0; 4 * h],
            head_weight: Matrix::zeros(k, h),
            head_bias: vec![0.0; k],
        })
    }

    pub fn shape(&self) -> LstmShape {
        self.shape
    }

    /// Runs the recurrence from a zero state and returns logits computed
    /// from the last hidden state.
    pub fn forward(&self, sequence: &[&Matrix]) -> Result<(Matrix, LstmCache)> {
        let first = sequence
            .first()
            .ok_or_else(|| Error::Usage("LSTM input sequence is empty".into()))?;
        let n = first.rows();
        let hd = self.shape.hidden_dim;
        let mut h = Matrix::zeros(n, hd);
        let mut c = Matrix::zeros(n, hd);
        let mut steps = Vec::with_capacity(sequence.len());
        for (t, x) in sequence.iter().enumerate() {
            if x.shape() != (n, self.shape.input_dim) {
                return Err(Error::shape(
                    format!("LSTM input at step {t}"),
                    format!("{n}×{}", self.shape.input_dim),
                    format!("{}×{}", x.rows(), x.cols()),
                ));
            }
            let mut gates = x.matmul_t(&self.w_input)?;
            gates.add_assign(&h.matmul_t(&self.w_recurrent)?)?;
            gates.add_row(&self.bias)?;
            let mut c_next = Matrix::zeros(n, hd);
            let mut tanh_c = Matrix::zeros(n, hd);
            let mut h_next = Matrix::zeros(n, hd);
            for r in 0..n {
                let g = gates.row_mut(r);
                for j in 0..hd {
                    g[j] = sigmoid(g[j]);
                    g[hd + j] = sigmoid(g[hd + j]);
                    g[2 * hd + j] = g[2 * hd + j].tanh();
                    g[3 * hd + j] = sigmoid(g[3 * hd + j]);
                }
                let g = gates.row(r);
                for j in 0..hd {
                    let cv = g[hd + j] * c.get(r, j) + g[j] * g[2 * hd + j];
                    let tc = cv.tanh();
                    c_next.set(r, j, cv);
                    tanh_c.set(r, j, tc);
                    h_next.set(r, j, g[3 * hd + j] * tc);
                }
            }
            steps.push(Step {
                h_prev: std::mem::replace(&mut h, h_next),
                c_prev: std::mem::replace(&mut c, c_next),
                gates,
                tanh_c,
            });
        }
        let mut logits = h.matmul_t(&self.head_weight)?;
        logits.add_row(&self.head_bias)?;
        Ok((logits, LstmCache { steps, final_hidden: h }))
    }

    /// Backpropagation through time. Returns parameter gradients and the
    /// gradient with respect to each input step.
    pub fn backward(
        &self,
        sequence: &[&Matrix],
        cache: &LstmCache,
        grad_logits: &Matrix,
    ) -> Result<(Gradients, Vec<Matrix>)> {
        if sequence.len() != cache.steps.len() {
            return Err(Error::Usage("LSTM cache does not match the input sequence".into()));
        }
        let n = cache.final_hidden.rows();
        let hd = self.shape.hidden_dim;
        if grad_logits.shape() != (n, self.shape.num_classes) {
            return Err(Error::shape(
                "LSTM logit gradient",
                format!("{n}×{}", self.shape.num_classes),
                format!("{}×{}", grad_logits.rows(), grad_logits.cols()),
            ));
        }
        let grad_head_w = grad_logits.t_matmul(&cache.final_hidden)?;
        let grad_head_b = grad_logits.col_sums();
        let mut dh = grad_logits.matmul(&self.head_weight)?;
        let mut dc = Matrix::zeros(n, hd);
        let mut grad_wx = Matrix::zeros(4 * hd, self.shape.input_dim);
        let mut grad_wh = Matrix::zeros(4 * hd, hd);
        let mut grad_b = vec![0.0; 4 * hd];
        let mut grad_inputs = vec![Matrix::zeros(0, 0); sequence.len()];
        for t in (0..sequence.len()).rev() {
            let step = &cache.steps[t];
            let mut da = Matrix::zeros(n, 4 * hd);
            let mut dc_prev = Matrix::zeros(n, hd);
            for r in 0..n {
                let g = step.gates.row(r);
                let a = da.row_mut(r);
                for j in 0..hd {
                    let (i, f, cand, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                    let tc = step.tanh_c.get(r, j);
                    let dhv = dh.get(r, j);
                    let dcv = dc.get(r, j) + dhv * o * (1.0 - tc * tc);
                    a[j] = dcv * cand * i * (1.0 - i);
                    a[hd + j] = dcv * step.c_prev.get(r, j) * f * (1.0 - f);
                    a[2 * hd + j] = dcv * i * (1.0 - cand * cand);
                    a[3 * hd + j] = dhv * tc * o * (1.0 - o);
                    dc_prev.set(r, j, dcv * f);
                }
            }
            grad_wx.add_assign(&da.t_matmul(sequence[t])?)?;
            grad_wh.add_assign(&da.t_matmul(&step.h_prev)?)?;
            for (b, s) in grad_b.iter_mut().zip(da.col_sums()) {
                *b += s;
            }
            grad_inputs[t] = da.matmul(&self.w_input)?;
            dh = da.matmul(&self.w_recurrent)?;
            dc = dc_prev;
        }
        let grads = Gradients::new(vec![
            grad_wx.into_data(),
            grad_wh.into_data(),
            grad_b,
            grad_head_w.into_data(),
            grad_head_b,
        ]);
        Ok((grads, grad_inputs))
    }
}

impl Parameters for Lstm {
    fn param_names(&self) -> Vec<String> {
        ["w_input", "w_recurrent", "bias", "head_weight", "head_bias"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn params(&self) -> Vec<&[f64]> {
        vec![
            self.w_input.data(),
            self.w_recurrent.data(),
            &self.bias,
            self.head_weight.data(),
            &self.head_bias,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_input.data_mut(),
            self.w_recurrent.data_mut(),
            &mut self.bias,
            self.head_weight.data_mut(),
            &mut self.head_bias,
        ]
    }
}
