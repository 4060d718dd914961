//! Multi-head attention across embedding views, guided by trainable
//! per-head context vectors.
//!
//! For head `h` with projection `W_h` (head_dim × model_dim) and context
//! vector `c_h`, each view `v_i` of a sample is projected to `p_i = W_h v_i`
//! and scored `s_i = <c_h, p_i> / T`. The head output is `sum_i a_i p_i` with
//! `a = softmax(s)`, and the layer output concatenates the head outputs back
//! to `model_dim`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{ViewKind, ViewStack};
use crate::checkpoint::{Checkpoint, Checkpointable};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::math::matrix::dot;
use crate::math::{softmax, Gradients, Matrix, Parameters, Rng};

pub const DEFAULT_NUM_HEADS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    pub num_heads: usize,
    pub temperature: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            num_heads: DEFAULT_NUM_HEADS,
            temperature: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MageParams {
    num_heads: usize,
    model_dim: usize,
    head_dim: usize,
    temperature: f64,
    projections: Vec<Matrix>,
    contexts: Vec<Vec<f64>>,
}

/// Projections are drawn from `U(±sqrt(6 / (model_dim + head_dim)))`,
/// context vectors from `N(0, 1) / sqrt(head_dim)`.
pub fn mage_init(num_heads: usize, model_dim: usize, rng: &mut Rng) -> Result<MageParams> {
    if num_heads == 0 || model_dim == 0 {
        return Err(Error::Config(
            "attention needs at least one head and a positive width".into(),
        ));
    }
    if !model_dim.is_multiple_of(num_heads) {
        return Err(Error::Config(format!(
            "model_dim {model_dim} is not divisible by num_heads {num_heads}"
        )));
    }
    let head_dim = model_dim / num_heads;
    let bound = (6.0 / (model_dim + head_dim) as f64).sqrt();
    let mut projections = Vec::with_capacity(num_heads);
    for _ in 0..num_heads {
        let data = (0..head_dim * model_dim)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        projections.push(Matrix::from_vec(head_dim, model_dim, data)?);
    }
    let scale = 1.0 / (head_dim as f64).sqrt();
    let contexts = (0..num_heads)
        .map(|_| (0..head_dim).map(|_| rng.normal() * scale).collect())
        .collect();
    Ok(MageParams {
        num_heads,
        model_dim,
        head_dim,
        temperature: 1.0,
        projections,
        contexts,
    })
}

impl MageParams {
    pub fn from_config(config: &AttentionConfig, model_dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut p = mage_init(config.num_heads, model_dim, rng)?;
        p.set_temperature(config.temperature)?;
        Ok(p)
    }

    /// All-zero parameters with the given layout.
    pub fn zeroed(layout: MageLayout) -> Result<Self> {
        let mut p = mage_init(layout.num_heads, layout.model_dim, &mut Rng::new(0))?;
        p.set_temperature(layout.temperature)?;
        p.params_mut().into_iter().for_each(|b| b.fill(0.0));
        Ok(p)
    }

    pub fn layout(&self) -> MageLayout {
        MageLayout {
            num_heads: self.num_heads,
            model_dim: self.model_dim,
            temperature: self.temperature,
        }
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn model_dim(&self) -> usize {
        self.model_dim
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn set_temperature(&mut self, temperature: f64) -> Result<()> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!(
                "attention temperature {temperature} must be positive"
            )));
        }
        self.temperature = temperature;
        Ok(())
    }

    pub fn projection(&self, head: usize) -> &Matrix {
        &self.projections[head]
    }

    pub fn context(&self, head: usize) -> &[f64] {
        &self.contexts[head]
    }

    pub fn set_projection(&mut self, head: usize, w: Matrix) -> Result<()> {
        if w.shape() != (self.head_dim, self.model_dim) {
            return Err(Error::shape(
                format!("projection of head {head}"),
                format!("{}×{}", self.head_dim, self.model_dim),
                format!("{}×{}", w.rows(), w.cols()),
            ));
        }
        self.projections[head] = w;
        Ok(())
    }

    pub fn set_context(&mut self, head: usize, c: Vec<f64>) -> Result<()> {
        if c.len() != self.head_dim {
            return Err(Error::shape(format!("context of head {head}"), self.head_dim, c.len()));
        }
        self.contexts[head] = c;
        Ok(())
    }
}

impl Parameters for MageParams {
    fn param_names(&self) -> Vec<String> {
        (0..self.num_heads)
            .flat_map(|h| [format!("head{h}.projection"), format!("head{h}.context")])
            .collect()
    }

    fn params(&self) -> Vec<&[f64]> {
        self.projections
            .iter()
            .zip(&self.contexts)
            .flat_map(|(w, c)| [w.data(), c.as_slice()])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.projections
            .iter_mut()
            .zip(self.contexts.iter_mut())
            .flat_map(|(w, c)| [w.data_mut(), c.as_mut_slice()])
            .collect()
    }
}

/// Shape and temperature of an attention layer, without its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MageLayout {
    pub num_heads: usize,
    pub model_dim: usize,
    pub temperature: f64,
}

impl Checkpointable for MageParams {
    const KIND: &'static str = "mage-attention";

    fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new(Self::KIND);
        ckpt.set_meta("layout", &self.layout())?;
        ckpt.push_params("", self);
        Ok(ckpt)
    }

    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut params = MageParams::zeroed(ckpt.meta("layout")?)?;
        ckpt.fill_params("", &mut params)?;
        Ok(params)
    }
}

/// Attention weights for a batch, indexed by (sample, head, view).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTrace {
    samples: usize,
    heads: usize,
    views: usize,
    weights: Vec<f64>,
}

impl AttentionTrace {
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn head_weights(&self, sample: usize, head: usize) -> &[f64] {
        let start = (sample * self.heads + head) * self.views;
        &self.weights[start..start + self.views]
    }

    pub fn weight(&self, sample: usize, head: usize, view: usize) -> f64 {
        self.head_weights(sample, head)[view]
    }

    /// Weight of each view averaged over samples and heads.
    pub fn mean_per_view(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.views];
        for chunk in self.weights.chunks(self.views.max(1)) {
            for (m, w) in mean.iter_mut().zip(chunk) {
                *m += w;
            }
        }
        let count = (self.samples * self.heads).max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        mean
    }

    /// CSV rows `sample,head,view,weight`, one per weight.
    pub fn to_csv(&self, ids: &[String], kinds: &[ViewKind]) -> Result<String> {
        if ids.len() != self.samples {
            return Err(Error::shape("trace sample ids", self.samples, ids.len()));
        }
        if kinds.len() != self.views {
            return Err(Error::shape("trace view kinds", self.views, kinds.len()));
        }
        let mut out = String::from("sample,head,view,weight\n");
        for (s, id) in ids.iter().enumerate() {
            for h in 0..self.heads {
                for (v, kind) in kinds.iter().enumerate() {
                    writeln!(out, "{id},{h},{kind},{}", self.weight(s, h, v)).expect("writing to a String");
                }
            }
        }
        Ok(out)
    }

    pub fn write_csv(&self, ids: &[String], kinds: &[ViewKind], path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv(ids, kinds)?.as_bytes())
    }
}

/// Intermediate values of a forward pass.
#[derive(Clone, Debug)]
pub struct MageCache {
    /// `projected[h][i]` is view `i` projected by head `h` (samples × head_dim).
    projected: Vec<Vec<Matrix>>,
    trace: AttentionTrace,
}

impl MageCache {
    pub fn trace(&self) -> &AttentionTrace {
        &self.trace
    }
}

fn check_stack(params: &MageParams, stack: &ViewStack) -> Result<()> {
    if stack.view_count() == 0 {
        return Err(Error::Usage("attention over an empty view stack".into()));
    }
    if stack.dim() != params.model_dim {
        return Err(Error::shape("attention input views", params.model_dim, stack.dim()));
    }
    Ok(())
}

/// Fuses the views of every sample into one `model_dim` vector.
pub fn mage_forward(params: &MageParams, stack: &ViewStack) -> Result<(Matrix, MageCache)> {
    forward_impl(params, stack, None)
}

/// Forward pass with `offsets[h]` added to every score of head `h`. The
/// softmax makes the result independent of the offsets.
pub fn mage_forward_with_score_offsets(
    params: &MageParams,
    stack: &ViewStack,
    offsets: &[f64],
) -> Result<(Matrix, MageCache)> {
    if offsets.len() != params.num_heads {
        return Err(Error::shape("score offsets", params.num_heads, offsets.len()));
    }
    forward_impl(params, stack, Some(offsets))
}

fn forward_impl(params: &MageParams, stack: &ViewStack, offsets: Option<&[f64]>) -> Result<(Matrix, MageCache)> {
    check_stack(params, stack)?;
    let (n, nv, hd) = (stack.samples(), stack.view_count(), params.head_dim);
    let mut output = Matrix::zeros(n, params.model_dim);
    let mut weights = vec![0.0; n * params.num_heads * nv];
    let mut projected = Vec::with_capacity(params.num_heads);
    let mut scores = vec![0.0; nv];
    for h in 0..params.num_heads {
        let p: Vec<Matrix> = stack
            .views()
            .iter()
            .map(|v| v.matmul_t(&params.projections[h]))
            .collect::<Result<_>>()?;
        let c = &params.contexts[h];
        let shift = offsets.map_or(0.0, |o| o[h]);
        for s in 0..n {
            for (i, pi) in p.iter().enumerate() {
                scores[i] = dot(c, pi.row(s)) / params.temperature + shift;
            }
            let alpha = softmax(&scores);
            let out = &mut output.row_mut(s)[h * hd..(h + 1) * hd];
            for (i, pi) in p.iter().enumerate() {
                for (o, &x) in out.iter_mut().zip(pi.row(s)) {
                    *o += alpha[i] * x;
                }
            }
            let start = (s * params.num_heads + h) * nv;
            weights[start..start + nv].copy_from_slice(&alpha);
        }
        projected.push(p);
    }
    let trace = AttentionTrace {
        samples: n,
        heads: params.num_heads,
        views: nv,
        weights,
    };
    Ok((output, MageCache { projected, trace }))
}

/// Gradients with respect to the parameters and to every input view.
pub fn mage_backward(
    params: &MageParams,
    stack: &ViewStack,
    cache: &MageCache,
    grad_output: &Matrix,
) -> Result<(Gradients, Vec<Matrix>)> {
    check_stack(params, stack)?;
    let (n, nv, hd) = (stack.samples(), stack.view_count(), params.head_dim);
    if cache.trace.samples != n || cache.trace.views != nv || cache.projected.len() != params.num_heads {
        return Err(Error::Usage(
            "attention cache does not come from a forward pass over this stack".into(),
        ));
    }
    if grad_output.shape() != (n, params.model_dim) {
        return Err(Error::shape(
            "attention output gradient",
            format!("{n}×{}", params.model_dim),
            format!("{}×{}", grad_output.rows(), grad_output.cols()),
        ));
    }
    let t = params.temperature;
    let mut blocks = Vec::with_capacity(2 * params.num_heads);
    let mut grad_views: Vec<Matrix> = (0..nv).map(|_| Matrix::zeros(n, params.model_dim)).collect();
    let mut d_alpha = vec![0.0; nv];
    for h in 0..params.num_heads {
        let p = &cache.projected[h];
        let c = &params.contexts[h];
        let mut grad_p: Vec<Matrix> = (0..nv).map(|_| Matrix::zeros(n, hd)).collect();
        let mut grad_c = vec![0.0; hd];
        for s in 0..n {
            let go = &grad_output.row(s)[h * hd..(h + 1) * hd];
            let alpha = cache.trace.head_weights(s, h);
            for i in 0..nv {
                d_alpha[i] = dot(go, p[i].row(s));
            }
            let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            for i in 0..nv {
                let d_score = alpha[i] * (d_alpha[i] - mean) / t;
                let gp = grad_p[i].row_mut(s);
                for k in 0..hd {
                    gp[k] = alpha[i] * go[k] + d_score * c[k];
                    grad_c[k] += d_score * p[i].row(s)[k];
                }
            }
        }
        let mut grad_w = Matrix::zeros(hd, params.model_dim);
        for (i, gp) in grad_p.iter().enumerate() {
            grad_w.add_assign(&gp.t_matmul(&stack.views()[i])?)?;
            grad_views[i].add_assign(&gp.matmul(&params.projections[h])?)?;
        }
        blocks.push(grad_w.into_data());
        blocks.push(grad_c);
    }
    Ok((Gradients::new(blocks), grad_views))
}
