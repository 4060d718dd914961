//! Dense math, differentiable layers, losses, optimizers and the gradient checker.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod params;
pub mod rng;

pub use gradcheck::{finite_diff_grad_check, GradCheckConfig, GradCheckReport};
pub use layers::{Activation, LayerSpec};
pub use loss::{cross_entropy_loss, gaussian_kl, gaussian_kl_with_grad, mse_loss};
pub use matrix::{softmax, softmax_rows, Matrix};
pub use mlp::{ForwardCache, Mlp, Mode};
pub use optim::{step_decay_lr, Optimizer, OptimizerKind, StepDecaySchedule};
pub use params::{assign_flat, flatten_params, prefixed_names, Gradients, Parameters};
pub use rng::Rng;
