//! Deterministic quadrature rules.
//!
//! [`QuadratureRule`] holds nodes and weights for a definite integral over a
//! closed interval. Clenshaw–Curtis rules (Chebyshev extrema, explicit cosine
//! sums) discretize the quantile-space integrals of the objectives;
//! Gauss–Legendre rules handle the short segment integrals of the monotone
//! parameterization. [`WeightedNodes`] is a discrete probability measure used
//! for expectations under a reference distribution (e.g. Gauss–Hermite nodes
//! for the standard Gaussian).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "interval [{lo}, {hi}] must be finite with lo < hi"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };
    pub const SYMMETRIC: Interval = Interval { lo: -1.0, hi: 1.0 };

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    ClenshawCurtis,
    GaussLegendre,
}

/// Nodes (ascending) and weights realizing `∫_a^b f` on an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    kind: RuleKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    interval: Interval,
}

impl QuadratureRule {
    /// Clenshaw–Curtis rule with `n_points` Chebyshev extrema mapped to
    /// `interval`. Exact for polynomials of degree `n_points - 1`.
    pub fn clenshaw_curtis(n_points: usize, interval: Interval) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidArgument(format!(
                "Clenshaw-Curtis needs at least 2 points, got {n_points}"
            )));
        }
        let n = n_points - 1;
        // cos(2 j theta_k) = cos(2 pi j k / n): one table, integer indexing.
        let table: Vec<f64> = (0..n).map(|m| (2.0 * PI * m as f64 / n as f64).cos()).collect();
        let half = n / 2;
        let mut nodes = vec![0.0; n_points];
        let mut weights = vec![0.0; n_points];
        for k in 0..=half {
            let mut s = 0.0;
            for j in 1..=half {
                let b = if 2 * j == n { 1.0 } else { 2.0 };
                let idx = ((j as u64 * k as u64) % n as u64) as usize;
                s += b * table[idx] / (4.0 * (j * j) as f64 - 1.0);
            }
            let c = if k == 0 { 1.0 } else { 2.0 };
            let w = c / n as f64 * (1.0 - s);
            weights[k] = w;
            weights[n - k] = w;
            let x = (PI * (2.0 * k as f64 - n as f64) / (2.0 * n as f64)).sin();
            nodes[k] = x;
            nodes[n - k] = -x;
        }
        Ok(Self::from_reference(RuleKind::ClenshawCurtis, nodes, weights, interval))
    }

    /// Gauss–Legendre rule with `n_points` nodes, exact for degree
    /// `2 n_points - 1`. Nodes come from Newton iteration on the Legendre
    /// recurrence started at Chebyshev-like angles.
    pub fn gauss_legendre(n_points: usize, interval: Interval) -> Result<Self> {
        if n_points < 1 {
            return Err(Error::InvalidArgument("Gauss-Legendre needs at least 1 point".into()));
        }
        let n = n_points;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() <= 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self::from_reference(RuleKind::GaussLegendre, nodes, weights, interval))
    }

    fn from_reference(kind: RuleKind, mut nodes: Vec<f64>, mut weights: Vec<f64>, interval: Interval) -> Self {
        let half = 0.5 * interval.length();
        for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
            *x = if *x == -1.0 {
                interval.lo
            } else if *x == 1.0 {
                interval.hi
            } else {
                interval.lo + half * (*x + 1.0)
            };
            *w *= half;
        }
        Self { kind, nodes, weights, interval }
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The same rule affinely mapped onto another interval.
    pub fn mapped(&self, interval: Interval) -> Self {
        let scale = interval.length() / self.interval.length();
        let nodes = self
            .nodes
            .iter()
            .map(|&x| interval.lo + (x - self.interval.lo) * scale)
            .collect();
        let weights = self.weights.iter().map(|&w| w * scale).collect();
        Self { kind: self.kind, nodes, weights, interval }
    }

    /// `Σ w_i f(x_i)`; a non-finite `f(x_i)` is reported with its node.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (i, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite { context: "integrand", index: i, at: x, value: v });
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A discrete probability measure: points with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNodes {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedNodes {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "weighted nodes need equal nonzero lengths, got {} and {}",
                points.len(),
                weights.len()
            )));
        }
        Ok(Self { points, weights })
    }

    /// Gauss–Hermite nodes for the standard Gaussian `N(0, 1)`; exact for
    /// polynomial moments up to degree `2n - 1`.
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("Gauss-Hermite needs at least 1 node".into()));
        }
        // Physicists' weight e^{-t^2} via the orthonormal recurrence, then t = x / sqrt(2).
        let pim4 = PI.powf(-0.25);
        let mut t_nodes = vec![0.0; n];
        let mut t_weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        // Starting values from the Jacobi matrix eigenvalues, descending.
        let mut guesses = tridiagonal_eigenvalues(vec![0.0; n], (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect())?;
        guesses.sort_by(|a, b| b.total_cmp(a));
        for i in 0..m {
            let mut z = guesses[i];
            let mut pp = 0.0;
            for _ in 0..200 {
                // Hermite functions carry e^{-z²/2}, so the recurrence stays
                // in range for large n.
                let mut p1 = pim4 * (-0.5 * z * z).exp();
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            t_nodes[i] = z;
            t_nodes[n - 1 - i] = -z;
            let w = 2.0 * (-z * z).exp() / (pp * pp);
            t_weights[i] = w;
            t_weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            t_nodes[n / 2] = 0.0;
        }
        // NR ordering is descending.
        let sqrt_pi = PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = t_nodes
            .iter()
            .zip(&t_weights)
            .map(|(&t, &w)| (t * std::f64::consts::SQRT_2, w / sqrt_pi))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (points, weights) = pairs.into_iter().unzip();
        Ok(Self { points, weights })
    }

    /// A rule on a finite interval reweighted by a density (normalized so the
    /// weights sum to one).
    pub fn from_density<F: Fn(f64) -> f64>(rule: &QuadratureRule, density: F) -> Result<Self> {
        let mut points = Vec::with_capacity(rule.len());
        let mut weights = Vec::with_capacity(rule.len());
        for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
            let p = density(x);
            if !p.is_finite() {
                return Err(Error::NonFinite { context: "density", index: points.len(), at: x, value: p });
            }
            points.push(x);
            weights.push(w * p);
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("density has no mass on the rule".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Tensor product of one-dimensional probability nodes, used for
/// expectations under product references at small dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductNodes {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ProductNodes {
    pub fn tensor(factors: &[&WeightedNodes]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("tensor product of zero factors".into()));
        }
        let dim = factors.len();
        let total: usize = factors.iter().map(|f| f.len()).product();
        let mut points = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for (k, f) in factors.iter().enumerate() {
                points.push(f.points[idx[k]]);
                w *= f.weights[idx[k]];
            }
            weights.push(w);
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < factors[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Self { dim, points, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }
}

impl From<&WeightedNodes> for ProductNodes {
    fn from(nodes: &WeightedNodes) -> Self {
        Self { dim: 1, points: nodes.points.clone(), weights: nodes.weights.clone() }
    }
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` (length `n - 1`), by implicit QL with Wilkinson shifts.
fn tridiagonal_eigenvalues(mut d: Vec<f64>, off: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    let mut e = off;
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::InvalidArgument("tridiagonal eigenvalue iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(d)
}
