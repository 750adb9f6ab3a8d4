//! Spectral bases and expansions.
//!
//! Three families: Legendre polynomials on `[-1, 1]`, physicists' Hermite
//! polynomials (Rodrigues form) and orthonormal Hermite functions
//! `H_m(x) e^{-x²/2} / sqrt(2^m m! sqrt(pi))`. Everything is evaluated through
//! three-term recurrences, values and derivatives together.
//!
//! Multivariate expansions use total-degree index sets `|m|_1 <= n`, ordered
//! by total degree and then lexicographically.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distributions::Distribution1D;
use crate::error::{Error, Result};
use crate::optimize::{Cholesky, Matrix};
use crate::quadrature::{ProductNodes, QuadratureRule, WeightedNodes};

/// Slack allowed when checking the Legendre domain, for affine roundoff.
const LEGENDRE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisFamily {
    Legendre,
    HermitePolynomial,
    HermiteFunction,
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BasisFamily::Legendre => "legendre",
            BasisFamily::HermitePolynomial => "hermite-polynomial",
            BasisFamily::HermiteFunction => "hermite-function",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub max_degree: usize,
}

impl BasisSpec {
    pub fn new(family: BasisFamily, max_degree: usize) -> Self {
        Self { family, max_degree }
    }

    pub fn legendre(max_degree: usize) -> Self {
        Self::new(BasisFamily::Legendre, max_degree)
    }

    pub fn hermite_function(max_degree: usize) -> Self {
        Self::new(BasisFamily::HermiteFunction, max_degree)
    }

    pub fn hermite_polynomial(max_degree: usize) -> Self {
        Self::new(BasisFamily::HermitePolynomial, max_degree)
    }

    /// Dimension of the one-dimensional span.
    pub fn dim(&self) -> usize {
        self.max_degree + 1
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if self.family == BasisFamily::Legendre && !(x.abs() <= 1.0 + LEGENDRE_SLACK) {
            return Err(Error::Domain { what: "Legendre basis", value: x, domain: "[-1, 1]" });
        }
        Ok(())
    }

    fn check_degree(&self, m: usize) -> Result<()> {
        if m > self.max_degree {
            return Err(Error::InvalidArgument(format!(
                "degree {m} exceeds basis max degree {}",
                self.max_degree
            )));
        }
        Ok(())
    }

    /// `m`-th basis element at `x`.
    pub fn eval(&self, m: usize, x: f64) -> Result<f64> {
        self.check_degree(m)?;
        self.check_domain(x)?;
        let mut vals = vec![0.0; m + 1];
        fill_values(self.family, x, &mut vals);
        Ok(vals[m])
    }

    /// Exact derivative of the `m`-th basis element at `x`.
    pub fn deriv(&self, m: usize, x: f64) -> Result<f64> {
        self.check_degree(m)?;
        self.check_domain(x)?;
        let mut vals = vec![0.0; m + 1];
        let mut ders = vec![0.0; m + 1];
        fill_values_and_derivs(self.family, x, &mut vals, &mut ders);
        Ok(ders[m])
    }

    /// All elements `0..=max_degree` at `x` into `out`.
    pub fn eval_all(&self, x: f64, out: &mut [f64]) -> Result<()> {
        self.check_domain(x)?;
        debug_assert_eq!(out.len(), self.dim());
        fill_values(self.family, x, out);
        Ok(())
    }

    /// Values and derivatives of all elements at `x`.
    pub fn eval_all_with_deriv(&self, x: f64, vals: &mut [f64], ders: &mut [f64]) -> Result<()> {
        self.check_domain(x)?;
        fill_values_and_derivs(self.family, x, vals, ders);
        Ok(())
    }
}

fn fill_values(family: BasisFamily, x: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    match family {
        BasisFamily::Legendre => {
            out[0] = 1.0;
            if n > 1 {
                out[1] = x;
            }
            for k in 1..n.saturating_sub(1) {
                let kf = k as f64;
                out[k + 1] = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
            }
        }
        BasisFamily::HermitePolynomial => {
            out[0] = 1.0;
            if n > 1 {
                out[1] = 2.0 * x;
            }
            for k in 1..n.saturating_sub(1) {
                out[k + 1] = 2.0 * x * out[k] - 2.0 * k as f64 * out[k - 1];
            }
        }
        BasisFamily::HermiteFunction => {
            out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
            if n > 1 {
                out[1] = std::f64::consts::SQRT_2 * x * out[0];
            }
            for k in 1..n.saturating_sub(1) {
                let kf = k as f64;
                out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
            }
        }
    }
}

fn fill_values_and_derivs(family: BasisFamily, x: f64, vals: &mut [f64], ders: &mut [f64]) {
    fill_values(family, x, vals);
    let n = vals.len();
    if n == 0 {
        return;
    }
    match family {
        BasisFamily::Legendre => {
            // P'_{k+1} = P'_{k-1} + (2k + 1) P_k
            ders[0] = 0.0;
            if n > 1 {
                ders[1] = 1.0;
            }
            for k in 1..n.saturating_sub(1) {
                ders[k + 1] = ders[k - 1] + (2.0 * k as f64 + 1.0) * vals[k];
            }
        }
        BasisFamily::HermitePolynomial => {
            ders[0] = 0.0;
            for k in 1..n {
                ders[k] = 2.0 * k as f64 * vals[k - 1];
            }
        }
        BasisFamily::HermiteFunction => {
            // psi_k' = sqrt(2k) psi_{k-1} - x psi_k
            ders[0] = -x * vals[0];
            for k in 1..n {
                ders[k] = (2.0 * k as f64).sqrt() * vals[k - 1] - x * vals[k];
            }
        }
    }
}

/// Total-degree multi-index set `{m in N^dim : |m|_1 <= n}`, graded order.
pub fn total_degree_indices(dim: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dim - 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=remaining).rev() {
            prefix.push(k);
            rec(dim, remaining - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=n {
        rec(dim, total, &mut Vec::with_capacity(dim), &mut out);
    }
    out
}

/// A linear combination of basis elements in `dim` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExpansionRecord", into = "ExpansionRecord")]
pub struct ExpansionFunction {
    family: BasisFamily,
    degree: usize,
    dim: usize,
    coefficients: Vec<f64>,
    indices: Vec<Vec<usize>>,
}

/// Flat serialized form `{family, degree, coefficients}` (plus `dim` when
/// multivariate).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExpansionRecord {
    family: BasisFamily,
    degree: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    dim: usize,
    coefficients: Vec<f64>,
}

fn one() -> usize {
    1
}

fn is_one(d: &usize) -> bool {
    *d == 1
}

impl TryFrom<ExpansionRecord> for ExpansionFunction {
    type Error = Error;
    fn try_from(r: ExpansionRecord) -> Result<Self> {
        ExpansionFunction::multivariate(BasisSpec::new(r.family, r.degree), r.dim, r.coefficients)
    }
}

impl From<ExpansionFunction> for ExpansionRecord {
    fn from(f: ExpansionFunction) -> Self {
        ExpansionRecord { family: f.family, degree: f.degree, dim: f.dim, coefficients: f.coefficients }
    }
}

impl ExpansionFunction {
    /// One-dimensional expansion with `spec.dim()` coefficients.
    pub fn new(spec: BasisSpec, coefficients: Vec<f64>) -> Result<Self> {
        Self::multivariate(spec, 1, coefficients)
    }

    /// Expansion over the total-degree index set in `dim` variables.
    pub fn multivariate(spec: BasisSpec, dim: usize, coefficients: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("expansion dimension must be positive".into()));
        }
        let indices = total_degree_indices(dim, spec.max_degree);
        if coefficients.len() != indices.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients for degree {} in {} variables, got {}",
                indices.len(),
                spec.max_degree,
                dim,
                coefficients.len()
            )));
        }
        Ok(Self { family: spec.family, degree: spec.max_degree, dim, coefficients, indices })
    }

    pub fn zeros(spec: BasisSpec, dim: usize) -> Self {
        let n = total_degree_indices(dim, spec.max_degree).len();
        Self::multivariate(spec, dim, vec![0.0; n]).expect("sized by construction")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn with_coefficients(&self, coefficients: Vec<f64>) -> Result<Self> {
        Self::multivariate(self.spec(), self.dim, coefficients)
    }

    pub fn spec(&self) -> BasisSpec {
        BasisSpec::new(self.family, self.degree)
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Value at a point of dimension `dim`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        if self.dim == 1 {
            let mut vals = vec![0.0; self.degree + 1];
            self.spec().eval_all(x[0], &mut vals)?;
            return Ok(dot(&self.coefficients, &vals));
        }
        let tables = self.coordinate_tables(x)?;
        Ok(self
            .indices
            .iter()
            .zip(&self.coefficients)
            .map(|(m, c)| c * m.iter().enumerate().map(|(k, &mk)| tables[k].0[mk]).product::<f64>())
            .sum())
    }

    /// Partial derivative with respect to the last variable.
    pub fn diag_deriv(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let tables = self.coordinate_tables(x)?;
        let last = self.dim - 1;
        Ok(self
            .indices
            .iter()
            .zip(&self.coefficients)
            .map(|(m, c)| {
                let mut p = tables[last].1[m[last]];
                for (k, &mk) in m.iter().enumerate().take(last) {
                    p *= tables[k].0[mk];
                }
                c * p
            })
            .sum())
    }

    /// Convenience for `dim == 1`.
    pub fn eval1(&self, x: f64) -> Result<f64> {
        self.eval(&[x])
    }

    pub fn deriv1(&self, x: f64) -> Result<f64> {
        self.diag_deriv(&[x])
    }

    /// Collapses the expansion along the prefix `x_{1:dim-1}` into
    /// one-dimensional coefficients in the last variable.
    pub fn restrict_to_last(&self, prefix: &[f64]) -> Result<Vec<f64>> {
        if prefix.len() + 1 != self.dim {
            return Err(Error::InvalidArgument(format!(
                "prefix of length {} for a {}-variate expansion",
                prefix.len(),
                self.dim
            )));
        }
        if self.dim == 1 {
            return Ok(self.coefficients.clone());
        }
        let spec = self.spec();
        let mut tables = Vec::with_capacity(prefix.len());
        for &xk in prefix {
            let mut v = vec![0.0; spec.dim()];
            spec.eval_all(xk, &mut v)?;
            tables.push(v);
        }
        let mut out = vec![0.0; spec.dim()];
        for (m, c) in self.indices.iter().zip(&self.coefficients) {
            let mut p = *c;
            for (k, t) in tables.iter().enumerate() {
                p *= t[m[k]];
            }
            out[m[self.dim - 1]] += p;
        }
        Ok(out)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "point of dimension {} for a {}-variate expansion",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn coordinate_tables(&self, x: &[f64]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let spec = self.spec();
        x.iter()
            .map(|&xk| {
                let mut v = vec![0.0; spec.dim()];
                let mut d = vec![0.0; spec.dim()];
                spec.eval_all_with_deriv(xk, &mut v, &mut d)?;
                Ok((v, d))
            })
            .collect()
    }
}

/// Condition number above which Gram systems are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Result of an L² projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub function: ExpansionFunction,
    /// Discretized `‖target - π_n target‖_{L²_η}`.
    pub residual: f64,
    pub condition: f64,
}

/// L²_η projection of `target` onto the span of `spec`, with the reference
/// expectation discretized by pushing `rule` (on `[0, 1]`) through the
/// reference quantile function.
pub fn project_l2<F: Fn(f64) -> f64>(
    target: F,
    spec: BasisSpec,
    reference: &Distribution1D,
    rule: &QuadratureRule,
) -> Result<Projection> {
    let nodes = reference.quantile_nodes(rule)?;
    project_on_nodes(target, spec, &nodes)
}

/// L² projection against an explicit discrete measure.
pub fn project_on_nodes<F: Fn(f64) -> f64>(target: F, spec: BasisSpec, nodes: &WeightedNodes) -> Result<Projection> {
    let product = ProductNodes::from(nodes);
    let p = project_on_product(|x: &[f64]| target(x[0]), spec, 1, &product)?;
    Ok(p)
}

/// L² projection of a `dim`-variate function onto the total-degree span,
/// against tensorized nodes. `target` is called once per node, in node order.
pub fn project_on_product<F: FnMut(&[f64]) -> f64>(
    target: F,
    spec: BasisSpec,
    dim: usize,
    nodes: &ProductNodes,
) -> Result<Projection> {
    project_on_product_jittered(target, spec, dim, nodes, 0.0)
}

/// [`project_on_product`] with `jitter · trace(A) / k` added to the Gram
/// diagonal.
pub fn project_on_product_jittered<F: FnMut(&[f64]) -> f64>(
    mut target: F,
    spec: BasisSpec,
    dim: usize,
    nodes: &ProductNodes,
    jitter: f64,
) -> Result<Projection> {
    if !(jitter >= 0.0) || !jitter.is_finite() {
        return Err(Error::InvalidArgument(format!("jitter must be finite and non-negative, got {jitter}")));
    }
    if nodes.dim() != dim {
        return Err(Error::InvalidArgument(format!("{}-dimensional nodes for a {dim}-variate projection", nodes.dim())));
    }
    let proto = ExpansionFunction::zeros(spec, dim);
    let k = proto.len();
    let mut gram = Matrix::zeros(k);
    let mut rhs = vec![0.0; k];
    let mut row = vec![0.0; k];
    let mut samples = Vec::with_capacity(nodes.len());
    let mut tables = vec![vec![0.0; spec.dim()]; dim];
    for (i, (x, w)) in nodes.iter().enumerate() {
        for (t, &xk) in tables.iter_mut().zip(x) {
            spec.eval_all(xk, t)?;
        }
        for (r, m) in row.iter_mut().zip(proto.indices()) {
            *r = m.iter().enumerate().map(|(c, &mc)| tables[c][mc]).product();
        }
        let y = target(x);
        if !y.is_finite() {
            return Err(Error::NonFinite { context: "projection target", index: i, at: x[0], value: y });
        }
        for a in 0..k {
            let wa = w * row[a];
            rhs[a] += wa * y;
            for b in 0..=a {
                gram[(a, b)] += wa * row[b];
            }
        }
        samples.push((row.clone(), y, w));
    }
    for a in 0..k {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    if jitter > 0.0 {
        let shift = jitter * gram.trace() / k as f64;
        for a in 0..k {
            gram[(a, a)] += shift;
        }
    }
    let chol = Cholesky::factor(&gram).map_err(|_| Error::IllConditioned { condition: f64::INFINITY })?;
    let condition = chol.condition_estimate(&gram);
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let coefficients = chol.solve(&rhs);
    let residual = samples
        .iter()
        .map(|(r, y, w)| w * (y - dot(r, &coefficients)).powi(2))
        .sum::<f64>()
        .sqrt();
    let function = ExpansionFunction::multivariate(spec, dim, coefficients)?;
    Ok(Projection { function, residual, condition })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
