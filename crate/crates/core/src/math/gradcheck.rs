//! Central-difference verification of analytic gradients.
//!
//! The relative error of one component is `|a - n| / max(|a|, |n|, floor)`
//! where `a` is the analytic and `n` the numeric derivative. The floor keeps
//! components that are zero up to rounding from dominating the report; below
//! it the comparison is effectively absolute.

use super::params::{Gradients, Parameters};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many evenly spaced entries per block.
    pub max_entries_per_block: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            max_entries_per_block: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn worst_block(&self) -> Option<&BlockReport> {
        self.blocks
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `objective`'s analytic gradient against central differences for
/// every parameter block of `model`.
///
/// `objective` must be a pure function of the parameters: any randomness it
/// uses (dropout masks, reparameterization noise) has to come from a
/// generator re-seeded on every call. This is verified up front.
pub fn finite_diff_grad_check<M, F>(model: &mut M, mut objective: F, config: GradCheckConfig) -> Result<GradCheckReport>
where
    M: Parameters + ?Sized,
    F: FnMut(&M) -> Result<(f64, Gradients)>,
{
    let (base, analytic) = objective(model)?;
    let (again, _) = objective(model)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::Usage(format!(
            "objective is not deterministic ({base} vs {again}); freeze its randomness"
        )));
    }
    analytic.check_matches(model)?;

    let names = model.param_names();
    let h = config.step;
    let mut blocks = Vec::with_capacity(names.len());
    for (b, name) in names.into_iter().enumerate() {
        let len = analytic.blocks[b].len();
        let stride = match config.max_entries_per_block {
            Some(cap) if cap > 0 && len > cap => len.div_ceil(cap),
            _ => 1,
        };
        let mut max_rel = 0.0f64;
        let mut checked = 0;
        for i in (0..len).step_by(stride) {
            let original = model.params()[b][i];
            model.params_mut()[b][i] = original + h;
            let plus = objective(model)?.0;
            model.params_mut()[b][i] = original - h;
            let minus = objective(model)?.0;
            model.params_mut()[b][i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            max_rel = max_rel.max(relative_error(analytic.blocks[b][i], numeric));
            checked += 1;
        }
        blocks.push(BlockReport {
            name,
            max_rel_error: max_rel,
            checked,
        });
    }
    Ok(GradCheckReport {
        blocks,
        tolerance: config.tolerance,
    })
}

/// Central-difference gradient of a scalar function of a vector.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut point = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = point[i];
            point[i] = orig + h;
            let plus = f(&point);
            point[i] = orig - h;
            let minus = f(&point);
            point[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}
