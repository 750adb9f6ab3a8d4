use rayon::prelude::*;

use crate::basis::{BasisSpec, ExpansionFunction};
use crate::error::{Error, Result};
use crate::optimize::Objective;
use crate::quadrature::WeightedNodes;

const RADICAND_FLOOR: f64 = -1e-12;

/// Biased (V-statistic) MMD between two samples on the line under
/// `κ(u, v) = exp(-γ²|u - v|²)`.
pub fn mmd_gaussian(xs: &[f64], ys: &[f64], gamma: f64) -> Result<f64> {
    let wx = vec![1.0 / xs.len().max(1) as f64; xs.len()];
    let wy = vec![1.0 / ys.len().max(1) as f64; ys.len()];
    mmd_weighted(xs, &wx, ys, &wy, gamma)
}

/// MMD between two discrete probability measures on the line.
pub fn mmd_weighted(xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64], gamma: f64) -> Result<f64> {
    let dist2 = |a: &f64, b: &f64| (a - b) * (a - b);
    mmd_generic(xs, wx, ys, wy, gamma, &dist2)
}

/// MMD between samples in `ℝᵈ`.
pub fn mmd_gaussian_points(xs: &[Vec<f64>], ys: &[Vec<f64>], gamma: f64) -> Result<f64> {
    let wx = vec![1.0 / xs.len().max(1) as f64; xs.len()];
    let wy = vec![1.0 / ys.len().max(1) as f64; ys.len()];
    let dist2 = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    mmd_generic(xs, &wx, ys, &wy, gamma, &dist2)
}

fn mmd_generic<P: Sync>(
    xs: &[P],
    wx: &[f64],
    ys: &[P],
    wy: &[f64],
    gamma: f64,
    dist2: &(dyn Fn(&P, &P) -> f64 + Sync),
) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InsufficientData { usable: 0, needed: 1 });
    }
    if wx.len() != xs.len() || wy.len() != ys.len() {
        return Err(Error::InvalidArgument("one weight per point required".into()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("kernel scale must be positive, got {gamma}")));
    }
    let g2 = gamma * gamma;
    let cross = |a: &[P], wa: &[f64], b: &[P], wb: &[f64]| -> f64 {
        a.par_iter()
            .zip(wa.par_iter())
            .map(|(u, wu)| wu * b.iter().zip(wb).map(|(v, wv)| wv * (-g2 * dist2(u, v)).exp()).sum::<f64>())
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    };
    let kxx = cross(xs, wx, xs, wx);
    let kyy = cross(ys, wy, ys, wy);
    let kxy = cross(xs, wx, ys, wy);
    let radicand = kxx + kyy - 2.0 * kxy;
    if radicand.is_nan() || radicand < RADICAND_FLOOR {
        return Err(Error::Divergence(format!("MMD radicand {radicand} is negative or NaN")));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// Squared MMD between `Σ_i w_i δ_{S(x_i)}` and `Σ_j v_j δ_{y_j}` as a
/// function of the coefficients of an expansion `S`.
#[derive(Debug, Clone)]
pub struct MmdFitObjective {
    gamma: f64,
    spec: BasisSpec,
    design: Vec<Vec<f64>>,
    weights: Vec<f64>,
    targets: Vec<f64>,
    target_weights: Vec<f64>,
    target_self: f64,
}

impl MmdFitObjective {
    pub fn new(gamma: f64, spec: BasisSpec, reference: &WeightedNodes, target: &WeightedNodes) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("kernel scale must be positive, got {gamma}")));
        }
        let mut design = Vec::with_capacity(reference.len());
        for &x in reference.points() {
            let mut row = vec![0.0; spec.dim()];
            spec.eval_all(x, &mut row)?;
            design.push(row);
        }
        let (ys, vs) = (target.points(), target.weights());
        let g2 = gamma * gamma;
        let target_self = ys
            .iter()
            .zip(vs)
            .map(|(a, va)| va * ys.iter().zip(vs).map(|(b, vb)| vb * (-g2 * (a - b) * (a - b)).exp()).sum::<f64>())
            .sum();
        Ok(Self {
            gamma,
            spec,
            design,
            weights: reference.weights().to_vec(),
            targets: ys.to_vec(),
            target_weights: vs.to_vec(),
            target_self,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn expansion(&self, coefficients: Vec<f64>) -> Result<ExpansionFunction> {
        ExpansionFunction::new(self.spec, coefficients)
    }

    /// MMD (not squared) at the given coefficients.
    pub fn distance(&self, coefficients: &[f64]) -> f64 {
        self.value(coefficients).max(0.0).sqrt()
    }

    /// Per-node `(value, d value / d S(x_i))` contributions.
    fn node_terms(&self, s: &[f64]) -> Vec<(f64, f64)> {
        let g2 = self.gamma * self.gamma;
        s.par_iter()
            .zip(self.weights.par_iter())
            .map(|(&si, &wi)| {
                let (mut v, mut d) = (0.0, 0.0);
                // the self term is symmetric in (i, j), which doubles its derivative
                for (&sj, &wj) in s.iter().zip(&self.weights) {
                    let k = wj * (-g2 * (si - sj) * (si - sj)).exp();
                    v += k;
                    d -= 4.0 * g2 * (si - sj) * k;
                }
                for (&y, &vj) in self.targets.iter().zip(&self.target_weights) {
                    let k = vj * (-g2 * (si - y) * (si - y)).exp();
                    v -= 2.0 * k;
                    d += 4.0 * g2 * (si - y) * k;
                }
                (wi * v, wi * d)
            })
            .collect()
    }

    fn pushed(&self, c: &[f64]) -> Vec<f64> {
        self.design.iter().map(|row| row.iter().zip(c).map(|(b, a)| a * b).sum()).collect()
    }
}

impl Objective for MmdFitObjective {
    fn value(&self, c: &[f64]) -> f64 {
        self.node_terms(&self.pushed(c)).iter().map(|t| t.0).sum::<f64>() + self.target_self
    }

    fn gradient(&self, c: &[f64], grad: &mut [f64]) {
        self.value_and_gradient(c, grad);
    }

    fn value_and_gradient(&self, c: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = self.target_self;
        for ((v, d), row) in self.node_terms(&self.pushed(c)).into_iter().zip(&self.design) {
            total += v;
            for (g, b) in grad.iter_mut().zip(row) {
                *g += d * b;
            }
        }
        total
    }
}
