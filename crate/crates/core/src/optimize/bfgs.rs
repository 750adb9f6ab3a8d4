//! BFGS with a strong-Wolfe line search (bracketing + zoom with safeguarded
//! cubic interpolation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A differentiable objective `ℝᵏ → ℝ`.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    /// Override when value and gradient share work.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.gradient(x, grad);
        self.value(x)
    }
}

/// Objective assembled from two closures.
pub struct FnObjective<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (self.gradient)(x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    /// Stop once the gradient 2-norm falls to this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 500, c1: 1e-4, c2: 0.9, max_line_search: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub line_search_failures: usize,
    pub skipped_updates: usize,
    pub converged: bool,
    /// Objective value after every accepted iteration, starting at `x0`.
    #[serde(skip)]
    pub history: Vec<f64>,
}

const STEP_COLLAPSE: f64 = 1e-14;

/// Minimizes `objective` from `x0`.
///
/// The objective sequence is non-increasing. Curvature pairs with
/// `yᵀs <= 1e-12 |y||s|` are skipped to keep the inverse Hessian positive
/// definite. If the line search cannot make progress even from a reset
/// inverse Hessian, the run stops and reports a step collapse, which counts
/// as converged.
pub fn bfgs_minimize(objective: &dyn Objective, x0: &[f64], opts: &BfgsOptions) -> Result<OptimizerReport> {
    let k = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; k];
    let mut f = objective.value_and_gradient(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimization { iterations: 0, last_good: x, last_value: f });
    }
    let mut h = identity(k);
    let mut h_is_identity = true;
    let mut history = vec![f];
    let mut failures = 0;
    let mut skipped = 0;
    let mut iterations = 0;
    let mut converged = false;

    let mut x_new = vec![0.0; k];
    let mut g_new = vec![0.0; k];
    while iterations < opts.max_iter {
        let gnorm = norm(&g);
        if gnorm <= opts.tol {
            converged = true;
            break;
        }
        let mut p = mat_vec(&h, &g, k);
        p.iter_mut().for_each(|v| *v = -*v);
        let mut dphi0 = dot(&p, &g);
        if !(dphi0 < 0.0) {
            // Not a descent direction; restart from steepest descent.
            reset(&mut h, k);
            h_is_identity = true;
            p = g.iter().map(|v| -v).collect();
            dphi0 = -gnorm * gnorm;
        }
        let step = line_search(objective, &x, f, dphi0, &p, opts, &mut x_new, &mut g_new, iterations)?;
        let Some((alpha, f_new)) = step else {
            failures += 1;
            if h_is_identity {
                converged = true;
                break;
            }
            reset(&mut h, k);
            h_is_identity = true;
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = p.iter().map(|v| alpha * v).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if h_is_identity {
                // Scale the initial inverse Hessian before the first update.
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy, k);
            h_is_identity = false;
        } else {
            skipped += 1;
        }
        let decreased = f_new <= f;
        debug_assert!(decreased, "line search accepted an increasing step");
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        history.push(f);
        if alpha * norm(&p) < STEP_COLLAPSE * (1.0 + norm(&x)) {
            converged = true;
            break;
        }
    }
    let gradient_norm = norm(&g);
    if gradient_norm <= opts.tol {
        converged = true;
    }
    Ok(OptimizerReport {
        coefficients: x,
        objective: f,
        gradient_norm,
        iterations,
        line_search_failures: failures,
        skipped_updates: skipped,
        converged,
        history,
    })
}

/// Returns `Some((alpha, f(x + alpha p)))` with `x_new`, `g_new` filled, or
/// `None` when no decreasing step was found.
#[allow(clippy::too_many_arguments)]
fn line_search(
    objective: &dyn Objective,
    x: &[f64],
    f0: f64,
    dphi0: f64,
    p: &[f64],
    opts: &BfgsOptions,
    x_new: &mut [f64],
    g_new: &mut [f64],
    iteration: usize,
) -> Result<Option<(f64, f64)>> {
    let mut eval = |alpha: f64, x_new: &mut [f64], g_new: &mut [f64]| -> (f64, f64) {
        for ((xn, xi), pi) in x_new.iter_mut().zip(x).zip(p) {
            *xn = xi + alpha * pi;
        }
        let f = objective.value_and_gradient(x_new, g_new);
        (f, dot(g_new, p))
    };

    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = dphi0;
    let mut alpha = 1.0;
    let mut evals = 0;
    loop {
        if evals >= opts.max_line_search {
            return Ok(None);
        }
        evals += 1;
        let (fa, da) = eval(alpha, x_new, g_new);
        if !fa.is_finite() || !da.is_finite() {
            // Shrink into the finite region.
            alpha = 0.5 * (a_prev + alpha);
            if alpha - a_prev < STEP_COLLAPSE {
                return Err(Error::Optimization { iterations: iteration, last_good: x.to_vec(), last_value: f0 });
            }
            continue;
        }
        if fa > f0 + opts.c1 * alpha * dphi0 || (evals > 1 && fa >= f_prev) {
            return zoom(
                &mut eval, f0, dphi0, (a_prev, f_prev, d_prev), (alpha, fa, da), opts, x_new, g_new, evals,
            );
        }
        if da.abs() <= -opts.c2 * dphi0 {
            return Ok(Some((alpha, fa)));
        }
        if da >= 0.0 {
            return zoom(
                &mut eval, f0, dphi0, (alpha, fa, da), (a_prev, f_prev, d_prev), opts, x_new, g_new, evals,
            );
        }
        a_prev = alpha;
        f_prev = fa;
        d_prev = da;
        alpha *= 2.0;
    }
}

#[allow(clippy::too_many_arguments)]
fn zoom(
    eval: &mut dyn FnMut(f64, &mut [f64], &mut [f64]) -> (f64, f64),
    f0: f64,
    dphi0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    opts: &BfgsOptions,
    x_new: &mut [f64],
    g_new: &mut [f64],
    mut evals: usize,
) -> Result<Option<(f64, f64)>> {
    loop {
        let width = (hi.0 - lo.0).abs();
        if evals >= opts.max_line_search || width < STEP_COLLAPSE * lo.0.abs().max(1.0) {
            // Fall back to the best sufficient-decrease point, if any.
            if lo.0 > 0.0 && lo.1 < f0 {
                let (f, _) = eval(lo.0, x_new, g_new);
                return Ok(Some((lo.0, f)));
            }
            return Ok(None);
        }
        let trial = interpolate(lo, hi);
        evals += 1;
        let (ft, dt) = eval(trial, x_new, g_new);
        if !ft.is_finite() || ft > f0 + opts.c1 * trial * dphi0 || ft >= lo.1 {
            hi = (trial, if ft.is_finite() { ft } else { f64::MAX }, dt);
        } else {
            if dt.abs() <= -opts.c2 * dphi0 {
                return Ok(Some((trial, ft)));
            }
            if dt * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (trial, ft, dt);
        }
    }
}

/// Cubic interpolation minimizer inside the bracket, safeguarded toward the
/// middle; bisection when the cubic is unusable.
fn interpolate(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a0, f0, d0) = lo;
    let (a1, f1, d1) = hi;
    let (left, right) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let mid = 0.5 * (a0 + a1);
    if !(f1.is_finite() && d1.is_finite()) || f1 == f64::MAX {
        return mid;
    }
    let d1_ = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1);
    let disc = d1_ * d1_ - d0 * d1;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (a1 - a0).signum() * disc.sqrt();
    let t = a1 - (a1 - a0) * (d1 + d2 - d1_) / (d1 - d0 + 2.0 * d2);
    let margin = 0.1 * (right - left);
    if !t.is_finite() || t < left + margin || t > right - margin {
        mid
    } else {
        t
    }
}

fn identity(k: usize) -> Vec<f64> {
    let mut h = vec![0.0; k * k];
    for i in 0..k {
        h[i * k + i] = 1.0;
    }
    h
}

fn reset(h: &mut [f64], k: usize) {
    h.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..k {
        h[i * k + i] = 1.0;
    }
}

fn mat_vec(h: &[f64], v: &[f64], k: usize) -> Vec<f64> {
    (0..k).map(|i| dot(&h[i * k..(i + 1) * k], v)).collect()
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, k: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, k);
    let yhy = dot(y, &hy);
    let coeff = (1.0 + rho * yhy) * rho;
    for i in 0..k {
        for j in 0..k {
            h[i * k + j] += coeff * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
    // Symmetrize against drift.
    for i in 0..k {
        for j in 0..i {
            let avg = 0.5 * (h[i * k + j] + h[j * k + i]);
            h[i * k + j] = avg;
            h[j * k + i] = avg;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
