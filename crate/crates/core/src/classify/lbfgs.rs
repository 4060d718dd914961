//! Limited-memory BFGS with a weak Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::matrix::dot;

const APPROX_WOLFE_ONSET: f64 = 1e-8;
const APPROX_WOLFE_SIGMA: f64 = 0.9;
const APPROX_WOLFE_DELTA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo_c: f64,
    /// Step multiplier applied after a rejected trial.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Weak Wolfe curvature constant: accepted steps reduce the magnitude
    /// of the directional derivative by at least this factor.
    pub curvature_c: f64,
    /// Use secant interpolation of the directional derivative to pick trial
    /// steps, and prefer the secant step over the first trial when both pass.
    /// On a quadratic this is the exact line minimizer.
    pub secant_refinement: bool,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iterations: 1000,
            gradient_tolerance: 1e-8,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
            curvature_c: 0.9,
            secant_refinement: true,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::Config("L-BFGS memory must be >= 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Config("L-BFGS gradient tolerance must be positive".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Config("L-BFGS line-search constants must lie in (0, 1)".into()));
        }
        if !(self.curvature_c > self.armijo_c && self.curvature_c < 1.0) {
            return Err(Error::Config(
                "L-BFGS curvature constant must lie in (armijo_c, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective value after each accepted step, starting with `f(x0)`.
    pub trajectory: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns `-H g` for the implicit inverse Hessian.
fn direction(g: &[f64], memory: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for p in memory.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some(last) = memory.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in memory.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        q.iter_mut().zip(&p.s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Accepted {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

struct Trial {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

impl Trial {
    fn into_accepted(self) -> Accepted {
        Accepted {
            x: self.x,
            f: self.f,
            g: self.g,
        }
    }
}

enum Verdict {
    Accept,
    TooLong,
    TooShort,
}

/// Zero of the linear interpolation of the directional derivative between
/// two step lengths.
fn secant(a: f64, slope_a: f64, b: f64, slope_b: f64) -> Option<f64> {
    let t = a + (b - a) * slope_a / (slope_a - slope_b);
    (t.is_finite() && (slope_a - slope_b) * (a - b) > 0.0).then_some(t)
}

/// Weak Wolfe line search by bracketing. A trial that fails the Armijo test
/// shrinks the bracket from above, one that fails the curvature test moves
/// it up. The next trial is the secant step when it lies well inside the
/// bracket and falls back to halving or doubling otherwise.
fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
    initial: f64,
    cfg: &LbfgsConfig,
) -> Option<Accepted>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let slope = dot(g, d);
    let mut evaluate = |alpha: f64| {
        let xt = axpy(x, alpha, d);
        let (ft, gt) = objective(&xt);
        let st = dot(&gt, d);
        Trial {
            alpha,
            x: xt,
            f: ft,
            g: gt,
            slope: st,
        }
    };
    let verdict = |t: &Trial| {
        if !t.f.is_finite() || !t.slope.is_finite() {
            return Verdict::TooLong;
        }
        let armijo = t.f <= f + cfg.armijo_c * t.alpha * slope;
        // Once the predicted decrease is near rounding level, f values carry
        // no signal and the approximate Wolfe test decides instead.
        let near_rounding = -t.alpha * slope <= APPROX_WOLFE_ONSET * (f.abs() + 1.0);
        let approx = near_rounding
            && t.f <= f
            && t.slope >= APPROX_WOLFE_SIGMA * slope
            && t.slope <= (2.0 * APPROX_WOLFE_DELTA - 1.0) * slope;
        if approx || (armijo && t.slope >= cfg.curvature_c * slope) {
            Verdict::Accept
        } else if armijo {
            Verdict::TooShort
        } else {
            Verdict::TooLong
        }
    };
    let mut trial = evaluate(initial);
    if cfg.secant_refinement && trial.f.is_finite() {
        if let Some(refined) = secant(0.0, slope, trial.alpha, trial.slope) {
            if refined > 0.0 && (refined - trial.alpha).abs() > 1e-12 * trial.alpha {
                let candidate = evaluate(refined);
                if matches!(verdict(&candidate), Verdict::Accept) && (candidate.f <= trial.f || !trial.f.is_finite()) {
                    return Some(candidate.into_accepted());
                }
            }
        }
    }
    let (mut lo, mut lo_slope) = (0.0, slope);
    let mut hi: Option<(f64, f64)> = None;
    for _ in 0..=cfg.max_backtracks {
        match verdict(&trial) {
            Verdict::Accept => return Some(trial.into_accepted()),
            Verdict::TooLong => hi = Some((trial.alpha, trial.slope)),
            Verdict::TooShort => (lo, lo_slope) = (trial.alpha, trial.slope),
        }
        let next = match hi {
            Some((h, h_slope)) => {
                let width = h - lo;
                let guess = if cfg.secant_refinement && h_slope.is_finite() {
                    secant(lo, lo_slope, h, h_slope)
                } else {
                    None
                };
                match guess {
                    Some(t) if t > lo + 0.1 * width && t < h - 0.1 * width => t,
                    _ if lo == 0.0 => h * cfg.shrink,
                    _ => lo + 0.5 * width,
                }
            }
            None => {
                let guess = if cfg.secant_refinement {
                    secant(0.0, slope, lo, lo_slope)
                } else {
                    None
                };
                guess.map_or(2.0 * lo, |t| t.clamp(2.0 * lo, 10.0 * lo))
            }
        };
        trial = evaluate(next);
    }
    None
}

/// Minimizes a smooth objective that returns `(value, gradient)`.
///
/// Stops when the gradient norm drops below the tolerance or after
/// `max_iterations` accepted steps. When a line search fails along the
/// quasi-Newton direction the memory is cleared and steepest descent is
/// tried; if that fails too, the error carries the last iterate.
pub fn lbfgs_minimize<F>(mut objective: F, x0: &[f64], config: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    config.validate()?;
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("objective is not finite at the starting point".into()));
    }
    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(config.memory);
    let mut trajectory = vec![f];
    let mut iterations = 0;
    let mut grad_norm = norm(&g);
    while grad_norm >= config.gradient_tolerance && iterations < config.max_iterations {
        let mut d = direction(&g, &memory);
        if memory.is_empty() || dot(&g, &d) >= 0.0 {
            memory.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let initial = if memory.is_empty() {
            1.0 / grad_norm.max(1.0)
        } else {
            1.0
        };
        let step = match line_search(&mut objective, &x, f, &g, &d, initial, config) {
            Some(s) => s,
            None if !memory.is_empty() => {
                memory.clear();
                let sd: Vec<f64> = g.iter().map(|v| -v).collect();
                match line_search(&mut objective, &x, f, &g, &sd, 1.0 / grad_norm.max(1.0), config) {
                    Some(s) => s,
                    None => return Err(line_search_error(iterations, grad_norm, x)),
                }
            }
            None => return Err(line_search_error(iterations, grad_norm, x)),
        };
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if memory.len() == config.memory {
                memory.pop_front();
            }
            memory.push_back(Pair { s, y, rho: 1.0 / sy });
        } else {
            // restart once curvature information is lost
            memory.clear();
        }
        x = step.x;
        f = step.f;
        g = step.g;
        grad_norm = norm(&g);
        iterations += 1;
        trajectory.push(f);
    }
    Ok(LbfgsResult {
        x,
        value: f,
        iterations,
        converged: grad_norm < config.gradient_tolerance,
        grad_norm,
        trajectory,
    })
}

fn line_search_error(iterations: usize, grad_norm: f64, last_iterate: Vec<f64>) -> Error {
    Error::LineSearch {
        iterations,
        grad_norm,
        last_iterate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted_square(a: Vec<f64>) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) {
        move |x: &[f64]| {
            let diff: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| xi - ai).collect();
            (dot(&diff, &diff), diff.iter().map(|d| 2.0 * d).collect())
        }
    }

    #[test]
    fn quadratic_converges_to_shift() {
        let r = lbfgs_minimize(shifted_square(vec![1.0, 2.0, 3.0]), &[0.0; 3], &LbfgsConfig::default()).unwrap();
        assert!(r.converged && r.grad_norm < 1e-8);
        assert!(r.iterations <= 10, "{}", r.iterations);
        for (xi, ai) in r.x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((xi - ai).abs() < 1e-9);
        }
    }

    #[test]
    fn optimal_start_takes_no_steps() {
        let r = lbfgs_minimize(shifted_square(vec![1.0, 2.0]), &[1.0, 2.0], &LbfgsConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let rosen = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (f, g)
        };
        let cfg = LbfgsConfig {
            max_iterations: 100,
            ..LbfgsConfig::default()
        };
        let r = lbfgs_minimize(rosen, &[-1.2, 1.0], &cfg).unwrap();
        assert!(r.value < 1e-10, "f = {} after {} iterations", r.value, r.iterations);
    }

    #[test]
    fn accepted_steps_never_increase_the_objective() {
        let r = lbfgs_minimize(
            shifted_square(vec![5.0, -3.0, 0.5, 2.0]),
            &[0.0; 4],
            &LbfgsConfig::default(),
        )
        .unwrap();
        assert!(r.trajectory.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn unbounded_below_direction_fails_with_last_iterate() {
        // f has a non-vanishing gradient but rejects every trial point
        let bad = |x: &[f64]| {
            if x[0] == 0.0 {
                (0.0, vec![1.0])
            } else {
                (f64::NAN, vec![f64::NAN])
            }
        };
        let err = lbfgs_minimize(bad, &[0.0], &LbfgsConfig::default()).unwrap_err();
        assert!(matches!(err, Error::LineSearch { ref last_iterate, .. } if last_iterate == &vec![0.0]));
    }
}
