//! Central-difference checks of every differentiable component on small
//! random configurations.

use serde::{Deserialize, Serialize};

use crate::attention::{mage_backward, mage_forward, mage_init, MageParams};
use crate::augment::{corrupt, AeConfig, AutoencoderModel, Corruption, VaeConfig, VaeModel, ViewKind, ViewStack};
use crate::classify::{Lstm, LstmShape, MageLstm, MageSoftmax, SoftmaxModel, ViewClassifier};
use crate::data::MinMaxScaler;
use crate::error::{Error, Result};
use crate::math::gradcheck::{finite_diff_grad_check, GradCheckConfig, GradCheckReport};
use crate::math::rng::derive_seed;
use crate::math::{cross_entropy_loss, Activation, Gradients, LayerSpec, Matrix, Mlp, Mode, Parameters, Rng};

pub const DEFAULT_CONFIGS_PER_COMPONENT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Linear,
    BatchNorm,
    Dropout,
    Activations,
    Autoencoder,
    Denoising,
    Vae,
    Mage,
    MageInputs,
    Lstm,
    LstmInputs,
    Softmax,
    MageSoftmax,
    MageLstm,
}

impl Component {
    pub const ALL: [Component; 14] = [
        Component::Linear,
        Component::BatchNorm,
        Component::Dropout,
        Component::Activations,
        Component::Autoencoder,
        Component::Denoising,
        Component::Vae,
        Component::Mage,
        Component::MageInputs,
        Component::Lstm,
        Component::LstmInputs,
        Component::Softmax,
        Component::MageSoftmax,
        Component::MageLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Linear => "linear",
            Component::BatchNorm => "batch-norm",
            Component::Dropout => "dropout",
            Component::Activations => "activations",
            Component::Autoencoder => "autoencoder",
            Component::Denoising => "denoising-autoencoder",
            Component::Vae => "vae",
            Component::Mage => "mage-attention",
            Component::MageInputs => "mage-attention-inputs",
            Component::Lstm => "lstm",
            Component::LstmInputs => "lstm-inputs",
            Component::Softmax => "softmax",
            Component::MageSoftmax => "mage+softmax",
            Component::MageLstm => "mage+lstm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub component: String,
    pub configs: usize,
    pub max_rel_error: f64,
    /// Seed index and parameter block with the largest error.
    pub worst: String,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteConfig {
    pub configs_per_component: usize,
    pub base_seed: u64,
    pub check: GradCheckConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            configs_per_component: DEFAULT_CONFIGS_PER_COMPONENT,
            base_seed: 0,
            check: GradCheckConfig::default(),
        }
    }
}

fn size(rng: &mut Rng, low: usize, high: usize) -> usize {
    low + rng.below(high - low + 1)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).expect("sized")
}

fn unit_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform()).collect()).expect("sized")
}

fn random_labels(n: usize, classes: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.below(classes)).collect()
}

/// `sum(weights ⊙ output)`, whose gradient with respect to the output is
/// `weights`; used where a component has no loss of its own.
fn probe(output: &Matrix, weights: &Matrix) -> Result<f64> {
    Ok(output.hadamard(weights)?.sum())
}

fn check_mlp(
    specs: Vec<LayerSpec>,
    input_dim: usize,
    mode: Mode,
    seed: u64,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let mut mlp = Mlp::new(input_dim, specs, &mut rng)?;
    let batch = size(&mut rng, 3, 6);
    let input = random_matrix(batch, input_dim, &mut rng);
    let weights = random_matrix(batch, mlp.output_dim(), &mut rng);
    let mask_seed = rng.next_u64();
    finite_diff_grad_check(
        &mut mlp,
        |m: &Mlp| {
            let (out, cache) = m.forward(&input, mode, &mut Rng::new(mask_seed))?;
            let (_, grads) = m.backward(&cache, &weights)?;
            Ok((probe(&out, &weights)?, grads))
        },
        cfg,
    )
}

/// Matrices treated as parameters, for checking gradients with respect to
/// a component's inputs.
struct Inputs(Vec<Matrix>);

impl Parameters for Inputs {
    fn param_names(&self) -> Vec<String> {
        (0..self.0.len()).map(|i| format!("input{i}")).collect()
    }

    fn params(&self) -> Vec<&[f64]> {
        self.0.iter().map(|m| m.data()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.0.iter_mut().map(|m| m.data_mut()).collect()
    }
}

const VIEW_ORDER: [ViewKind; 4] = [
    ViewKind::Original,
    ViewKind::Linear,
    ViewKind::Autoencoder,
    ViewKind::Denoising,
];

fn random_stack(samples: usize, dim: usize, views: usize, rng: &mut Rng) -> Result<ViewStack> {
    let views: Vec<Matrix> = (0..views).map(|_| random_matrix(samples, dim, rng)).collect();
    ViewStack::from_parts(VIEW_ORDER[..views.len()].to_vec(), views)
}

fn random_attention(rng: &mut Rng) -> Result<(MageParams, usize)> {
    let heads = size(rng, 1, 3);
    let dim = heads * size(rng, 1, 3);
    let mut mage = mage_init(heads, dim, rng)?;
    mage.set_temperature(rng.uniform_range(0.5, 2.0))?;
    Ok((mage, dim))
}

fn small_lstm(input_dim: usize, rng: &mut Rng) -> Result<Lstm> {
    let shape = LstmShape {
        input_dim,
        hidden_dim: size(rng, 2, 5),
        num_classes: size(rng, 2, 3),
    };
    Lstm::new(shape, rng)
}

fn check_classifier<M: ViewClassifier>(
    model: &mut M,
    stack: &ViewStack,
    labels: &[usize],
    cfg: GradCheckConfig,
) -> Result<GradCheckReport> {
    finite_diff_grad_check(model, |m: &M| m.loss_and_grad(stack, labels), cfg)
}

/// Checks one random configuration of `component` drawn from `seed`.
pub fn check_component(component: Component, seed: u64, cfg: GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    match component {
        Component::Linear => {
            let (i, o) = (size(&mut rng, 2, 6), size(&mut rng, 1, 5));
            check_mlp(vec![LayerSpec::linear(i, o)], i, Mode::Train, seed, cfg)
        }
        Component::BatchNorm => {
            let (i, o) = (size(&mut rng, 2, 5), size(&mut rng, 2, 5));
            let specs = vec![LayerSpec::linear(i, o), LayerSpec::batch_norm(o)];
            check_mlp(specs, i, Mode::Train, seed, cfg)
        }
        Component::Dropout => {
            let (i, o) = (size(&mut rng, 2, 5), size(&mut rng, 3, 6));
            let rate = rng.uniform_range(0.1, 0.5);
            let specs = vec![LayerSpec::linear(i, o), LayerSpec::dropout(rate)];
            check_mlp(specs, i, Mode::Train, seed, cfg)
        }
        Component::Activations => {
            let i = size(&mut rng, 2, 4);
            let mut specs = Vec::new();
            let mut prev = i;
            for act in [
                Activation::Tanh,
                Activation::Sigmoid,
                Activation::leaky(),
                Activation::Relu,
                Activation::Identity,
            ] {
                let o = size(&mut rng, 2, 4);
                specs.push(LayerSpec::linear(prev, o));
                specs.push(LayerSpec::activation(act));
                prev = o;
            }
            check_mlp(specs, i, Mode::Train, seed, cfg)
        }
        Component::Autoencoder | Component::Denoising => {
            let dim = size(&mut rng, 3, 6);
            let config = AeConfig {
                hidden: vec![size(&mut rng, 3, 5)],
                latent: size(&mut rng, 2, 3),
                ..AeConfig::default()
            };
            let data = unit_matrix(size(&mut rng, 3, 6), dim, &mut rng);
            let mut model = AutoencoderModel::new(config, MinMaxScaler::fit(&data)?, &mut rng)?;
            let input = if component == Component::Denoising {
                corrupt(&data, &Corruption::GaussianAdditive { sigma: 0.1 }, &mut rng)
            } else {
                data.clone()
            };
            let mask_seed = rng.next_u64();
            finite_diff_grad_check(
                &mut model,
                |m: &AutoencoderModel| {
                    let (loss, grads, _) = m.loss_and_grad(&input, &data, Mode::Train, &mut Rng::new(mask_seed))?;
                    Ok((loss, grads))
                },
                cfg,
            )
        }
        Component::Vae => {
            let dim = size(&mut rng, 3, 6);
            let config = VaeConfig {
                hidden: size(&mut rng, 3, 5),
                latent: size(&mut rng, 2, 3),
                beta: rng.uniform_range(0.5, 1.5),
                ..VaeConfig::default()
            };
            let latent = config.latent;
            let data = unit_matrix(size(&mut rng, 3, 6), dim, &mut rng);
            let mut model = VaeModel::new(config, MinMaxScaler::fit(&data)?, &mut rng)?;
            let eps = random_matrix(data.rows(), latent, &mut rng);
            let mask_seed = rng.next_u64();
            finite_diff_grad_check(
                &mut model,
                |m: &VaeModel| {
                    let (loss, grads, _) = m.loss_and_grad(&data, &eps, Mode::Train, &mut Rng::new(mask_seed))?;
                    Ok((loss.total, grads))
                },
                cfg,
            )
        }
        Component::Mage => {
            let (mut mage, dim) = random_attention(&mut rng)?;
            let samples = size(&mut rng, 2, 4);
            let stack = random_stack(samples, dim, size(&mut rng, 1, 4), &mut rng)?;
            let weights = random_matrix(samples, dim, &mut rng);
            finite_diff_grad_check(
                &mut mage,
                |m: &MageParams| {
                    let (out, cache) = mage_forward(m, &stack)?;
                    let (grads, _) = mage_backward(m, &stack, &cache, &weights)?;
                    Ok((probe(&out, &weights)?, grads))
                },
                cfg,
            )
        }
        Component::MageInputs => {
            let (mage, dim) = random_attention(&mut rng)?;
            let samples = size(&mut rng, 2, 4);
            let stack = random_stack(samples, dim, size(&mut rng, 1, 4), &mut rng)?;
            let weights = random_matrix(samples, dim, &mut rng);
            let kinds = stack.kinds().to_vec();
            let mut inputs = Inputs(stack.views().to_vec());
            finite_diff_grad_check(
                &mut inputs,
                |x: &Inputs| {
                    let stack = ViewStack::from_parts(kinds.clone(), x.0.clone())?;
                    let (out, cache) = mage_forward(&mage, &stack)?;
                    let (_, grad_views) = mage_backward(&mage, &stack, &cache, &weights)?;
                    let grads = Gradients::new(grad_views.into_iter().map(Matrix::into_data).collect());
                    Ok((probe(&out, &weights)?, grads))
                },
                cfg,
            )
        }
        Component::Lstm => {
            let dim = size(&mut rng, 2, 4);
            let mut lstm = small_lstm(dim, &mut rng)?;
            let samples = size(&mut rng, 2, 4);
            let seq: Vec<Matrix> = (0..4).map(|_| random_matrix(samples, dim, &mut rng)).collect();
            let labels = random_labels(samples, lstm.shape().num_classes, &mut rng);
            finite_diff_grad_check(
                &mut lstm,
                |m: &Lstm| {
                    let refs: Vec<&Matrix> = seq.iter().collect();
                    let (logits, cache) = m.forward(&refs)?;
                    let (loss, grad) = cross_entropy_loss(&logits, &labels)?;
                    Ok((loss, m.backward(&refs, &cache, &grad)?.0))
                },
                cfg,
            )
        }
        Component::LstmInputs => {
            let dim = size(&mut rng, 2, 4);
            let lstm = small_lstm(dim, &mut rng)?;
            let samples = size(&mut rng, 2, 4);
            let mut inputs = Inputs((0..4).map(|_| random_matrix(samples, dim, &mut rng)).collect());
            let labels = random_labels(samples, lstm.shape().num_classes, &mut rng);
            finite_diff_grad_check(
                &mut inputs,
                |x: &Inputs| {
                    let refs: Vec<&Matrix> = x.0.iter().collect();
                    let (logits, cache) = lstm.forward(&refs)?;
                    let (loss, grad) = cross_entropy_loss(&logits, &labels)?;
                    let (_, grad_inputs) = lstm.backward(&refs, &cache, &grad)?;
                    Ok((
                        loss,
                        Gradients::new(grad_inputs.into_iter().map(Matrix::into_data).collect()),
                    ))
                },
                cfg,
            )
        }
        Component::Softmax => {
            let (k, f) = (size(&mut rng, 2, 4), size(&mut rng, 2, 6));
            let mut model = SoftmaxModel::random(k, f, rng.uniform_range(0.01, 0.5), &mut rng)?;
            let samples = size(&mut rng, 3, 8);
            let x = random_matrix(samples, f, &mut rng);
            let labels = random_labels(samples, k, &mut rng);
            finite_diff_grad_check(&mut model, |m: &SoftmaxModel| m.objective(&x, &labels), cfg)
        }
        Component::MageSoftmax => {
            let (mage, dim) = random_attention(&mut rng)?;
            let k = size(&mut rng, 2, 3);
            let head = SoftmaxModel::random(k, dim, rng.uniform_range(0.01, 0.5), &mut rng)?;
            let samples = size(&mut rng, 2, 5);
            let stack = random_stack(samples, dim, size(&mut rng, 2, 4), &mut rng)?;
            let labels = random_labels(samples, k, &mut rng);
            check_classifier(&mut MageSoftmax { mage, head }, &stack, &labels, cfg)
        }
        Component::MageLstm => {
            let (mage, dim) = random_attention(&mut rng)?;
            let lstm = small_lstm(dim, &mut rng)?;
            let samples = size(&mut rng, 2, 5);
            let stack = random_stack(samples, dim, size(&mut rng, 2, 4), &mut rng)?;
            let labels = random_labels(samples, lstm.shape().num_classes, &mut rng);
            check_classifier(&mut MageLstm { mage, lstm }, &stack, &labels, cfg)
        }
    }
}

/// Runs `configs_per_component` seeded configurations of each component.
pub fn run_gradient_suite(config: &SuiteConfig, components: &[Component]) -> Result<Vec<ComponentReport>> {
    if config.configs_per_component == 0 {
        return Err(Error::Usage(
            "at least one configuration per component is required".into(),
        ));
    }
    components
        .iter()
        .enumerate()
        .map(|(c, &component)| {
            let mut worst = (0.0f64, String::new());
            for i in 0..config.configs_per_component {
                let seed = derive_seed(config.base_seed, &[c as u64, i as u64]);
                let report = check_component(component, seed, config.check)
                    .map_err(|e| e.context(format!("{} configuration {i}", component.name())))?;
                if let Some(block) = report.worst_block() {
                    if block.max_rel_error >= worst.0 {
                        worst = (block.max_rel_error, format!("config {i}, {}", block.name));
                    }
                }
            }
            Ok(ComponentReport {
                component: component.name().to_string(),
                configs: config.configs_per_component,
                max_rel_error: worst.0,
                worst: worst.1,
                passed: worst.0 < config.check.tolerance,
            })
        })
        .collect()
}

/// Fixed-width table of `(component, max rel. error, pass)`.
pub fn render_suite_table(reports: &[ComponentReport]) -> String {
    let mut out = format!(
        "{:<24} {:>8} {:>14}  {}\n",
        "component", "configs", "max rel error", "result"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<24} {:>8} {:>14.3e}  {}\n",
            r.component,
            r.configs,
            r.max_rel_error,
            if r.passed { "pass" } else { "FAIL" }
        ));
    }
    out
}
