use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{MapComponent, Rectifier};
use crate::basis::{project_on_product, BasisFamily, BasisSpec, ExpansionFunction};
use crate::error::{Error, Result};
use crate::quadrature::{Interval, ProductNodes, QuadratureRule};

pub const DEFAULT_SEGMENT_ORDER: usize = 64;
pub const MAX_SEGMENT_ORDER: usize = 1024;
/// Agreement required between successive segment orders in batch evaluation.
pub const SEGMENT_AGREEMENT: f64 = 1e-11;

const INVERSE_TOL: f64 = 1e-10;
const BRACKET_WIDTH: f64 = 1e-6;
const MAX_DOUBLINGS: usize = 60;
const NEWTON_STEPS: usize = 8;

/// Gauss–Legendre rule on `[0, 1]`, reused for every segment integral.
#[derive(Debug, Clone, PartialEq)]
struct SegmentRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SegmentRule {
    fn new(order: usize) -> Result<Self> {
        let rule = QuadratureRule::gauss_legendre(order, Interval::UNIT)?;
        Ok(Self { nodes: rule.nodes().to_vec(), weights: rule.weights().to_vec() })
    }
}

/// `T(x) = f(x_{<i}, 0) + ∫_0^{x_i} r(∂_i f(x_{<i}, t)) dt` for an expansion
/// `f` in `i` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MonotoneRecord", into = "MonotoneRecord")]
pub struct MonotoneComponent {
    f: ExpansionFunction,
    rectifier: Rectifier,
    order: usize,
    rule: Arc<SegmentRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct MonotoneRecord {
    pub rectifier: Rectifier,
    pub basis: BasisSpec,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub dim: usize,
    pub coefficients: Vec<f64>,
    #[serde(default = "default_order")]
    pub segment_order: usize,
}

fn one() -> usize {
    1
}

fn is_one(d: &usize) -> bool {
    *d == 1
}

fn default_order() -> usize {
    DEFAULT_SEGMENT_ORDER
}

impl TryFrom<MonotoneRecord> for MonotoneComponent {
    type Error = Error;
    fn try_from(r: MonotoneRecord) -> Result<Self> {
        let f = ExpansionFunction::multivariate(r.basis, r.dim, r.coefficients)?;
        MonotoneComponent::with_order(f, r.rectifier, r.segment_order)
    }
}

impl From<MonotoneComponent> for MonotoneRecord {
    fn from(c: MonotoneComponent) -> Self {
        MonotoneRecord {
            rectifier: c.rectifier,
            basis: c.f.spec(),
            dim: c.f.dim(),
            coefficients: c.f.coefficients().to_vec(),
            segment_order: c.order,
        }
    }
}

/// Value, log diagonal derivative and their coefficient gradients at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentJet {
    pub value: f64,
    pub log_diag: f64,
    pub d_value: Vec<f64>,
    pub d_log_diag: Vec<f64>,
}

impl MonotoneComponent {
    pub fn new(f: ExpansionFunction, rectifier: Rectifier) -> Result<Self> {
        Self::with_order(f, rectifier, DEFAULT_SEGMENT_ORDER)
    }

    pub fn with_order(f: ExpansionFunction, rectifier: Rectifier, order: usize) -> Result<Self> {
        if order == 0 || order > MAX_SEGMENT_ORDER {
            return Err(Error::InvalidArgument(format!(
                "segment order {order} outside 1..={MAX_SEGMENT_ORDER}"
            )));
        }
        Ok(Self { f, rectifier, order, rule: Arc::new(SegmentRule::new(order)?) })
    }

    pub fn expansion(&self) -> &ExpansionFunction {
        &self.f
    }

    pub fn rectifier(&self) -> Rectifier {
        self.rectifier
    }

    pub fn segment_order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn with_coefficients(&self, coefficients: Vec<f64>) -> Result<Self> {
        Ok(Self { f: self.f.with_coefficients(coefficients)?, ..self.clone() })
    }

    fn split<'a>(&self, x: &'a [f64]) -> Result<(&'a [f64], f64)> {
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "point of dimension {} for component in {} variables",
                x.len(),
                self.dim()
            )));
        }
        Ok((&x[..x.len() - 1], x[x.len() - 1]))
    }

    /// Evaluates with the component's own segment order.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let (prefix, t) = self.split(x)?;
        let line = self.line(prefix)?;
        line.value(t, &self.rule)
    }

    /// Evaluates with an explicit segment order.
    pub fn eval_with_order(&self, x: &[f64], order: usize) -> Result<f64> {
        let rule = SegmentRule::new(order)?;
        let (prefix, t) = self.split(x)?;
        self.line(prefix)?.value(t, &rule)
    }

    /// `r(∂_i f(x))`.
    pub fn diag_deriv(&self, x: &[f64]) -> Result<f64> {
        let (prefix, t) = self.split(x)?;
        self.line(prefix)?.diag(t)
    }

    /// Smallest order (doubling from the component's order) at which two
    /// successive orders agree within [`SEGMENT_AGREEMENT`] on every point.
    pub fn resolve_order(&self, points: &[Vec<f64>]) -> Result<usize> {
        let mut order = self.order;
        let mut current = self.eval_points(points, &SegmentRule::new(order)?)?;
        while order * 2 <= MAX_SEGMENT_ORDER {
            let next_rule = SegmentRule::new(order * 2)?;
            let next = self.eval_points(points, &next_rule)?;
            let agree = current
                .iter()
                .zip(&next)
                .all(|(a, b)| (a - b).abs() <= SEGMENT_AGREEMENT * a.abs().max(1.0));
            if agree {
                return Ok(order);
            }
            order *= 2;
            current = next;
        }
        Ok(order)
    }

    /// Evaluates a batch with the segment order resolved on that batch.
    /// Returns the values and the order used.
    pub fn eval_batch(&self, points: &[Vec<f64>]) -> Result<(Vec<f64>, usize)> {
        let order = self.resolve_order(points)?;
        let rule = if order == self.order { (*self.rule).clone() } else { SegmentRule::new(order)? };
        Ok((self.eval_points(points, &rule)?, order))
    }

    fn eval_points(&self, points: &[Vec<f64>], rule: &SegmentRule) -> Result<Vec<f64>> {
        points
            .iter()
            .map(|x| {
                let (prefix, t) = self.split(x)?;
                self.line(prefix)?.value(t, rule)
            })
            .collect()
    }

    /// Solves `T(prefix, t) = y` for `t`.
    pub fn inverse(&self, prefix: &[f64], y: f64) -> Result<f64> {
        if prefix.len() + 1 != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "prefix of length {} for component in {} variables",
                prefix.len(),
                self.dim()
            )));
        }
        if !y.is_finite() {
            return Err(Error::Domain { what: "inverse target", value: y, domain: "finite reals" });
        }
        let line = self.line(prefix)?;
        solve_increasing(&|t| line.value(t, &self.rule), &|t| line.diag(t), y)
    }

    /// Value, `log r(∂_i f)` and both coefficient gradients at `x`.
    pub fn jet(&self, x: &[f64]) -> Result<ComponentJet> {
        let (prefix, t) = self.split(x)?;
        let spec = self.f.spec();
        let indices = self.f.indices();
        let last = self.dim() - 1;
        let factors = prefix_factors(spec, indices, prefix)?;
        let line = Line::from_factors(&self.f, &factors, self.rectifier);
        let (value, log_diag, dv1, dl1) = line.jet(t, &self.rule)?;
        let d_value = indices.iter().zip(&factors).map(|(m, p)| p * dv1[m[last]]).collect();
        let d_log_diag = indices.iter().zip(&factors).map(|(m, p)| p * dl1[m[last]]).collect();
        Ok(ComponentJet { value, log_diag, d_value, d_log_diag })
    }

    fn line(&self, prefix: &[f64]) -> Result<Line> {
        Ok(Line { spec: self.f.spec(), coeffs: self.f.restrict_to_last(prefix)?, rectifier: self.rectifier })
    }

    /// Builds the monotone component reproducing `target`: the expansion
    /// with `∂_i f = r⁻¹(∂_i target)` and `f(·, 0) = target(·, 0)`, projected
    /// in L² against `nodes`.
    pub fn from_map(
        target: &dyn MapComponent,
        spec: BasisSpec,
        rectifier: Rectifier,
        nodes: &ProductNodes,
    ) -> Result<Self> {
        let dim = target.input_dim();
        if nodes.dim() != dim {
            return Err(Error::InvalidArgument(format!(
                "{}-dimensional nodes for a component in {dim} variables",
                nodes.dim()
            )));
        }
        let rule = SegmentRule::new(DEFAULT_SEGMENT_ORDER)?;
        let mut values = Vec::with_capacity(nodes.len());
        let mut buf = vec![0.0; dim];
        for (x, _) in nodes.iter() {
            buf.copy_from_slice(x);
            let t = x[dim - 1];
            buf[dim - 1] = 0.0;
            let offset = target.value(&buf)?;
            let mut acc = 0.0;
            for (s, w) in rule.nodes.iter().zip(&rule.weights) {
                buf[dim - 1] = t * s;
                let d = target.diag_deriv(&buf)?;
                if !(d > 0.0) {
                    return Err(Error::NotMonotone { at: buf[dim - 1], derivative: d });
                }
                acc += w * rectifier.inverse(d)?;
            }
            let d = target.diag_deriv(x)?;
            if !(d > 0.0) {
                return Err(Error::NotMonotone { at: t, derivative: d });
            }
            values.push(offset + t * acc);
        }
        let mut k = 0;
        let projection = project_on_product(
            |_| {
                let v = values[k];
                k += 1;
                v
            },
            spec,
            dim,
            nodes,
        )?;
        Self::new(projection.function, rectifier)
    }
}

impl MapComponent for MonotoneComponent {
    fn input_dim(&self) -> usize {
        self.dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.eval(x)
    }
    fn diag_deriv(&self, x: &[f64]) -> Result<f64> {
        MonotoneComponent::diag_deriv(self, x)
    }
    fn log_diag_deriv(&self, x: &[f64]) -> Result<f64> {
        self.split(x)?;
        Ok(self.rectifier.log_apply(self.f.diag_deriv(x)?))
    }
}

/// Solves `T(t) = y` for an increasing `T` with derivative `dt`: exponential
/// bracket expansion from `t = 0`, bisection to width 1e-6, then at most 8
/// safeguarded Newton steps, finishing with bisection if needed.
pub fn solve_increasing(
    value: &dyn Fn(f64) -> Result<f64>,
    derivative: &dyn Fn(f64) -> Result<f64>,
    y: f64,
) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::Domain { what: "inverse target", value: y, domain: "finite reals" });
    }
    let g = |t: f64| value(t).map(|v| v - y);
    let tol = (0.5 * INVERSE_TOL).max(8.0 * f64::EPSILON * y.abs());

    let g0 = g(0.0)?;
    if g0.abs() < tol {
        return Ok(0.0);
    }
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let (mut lo, mut hi) = (0.0_f64, dir);
    let mut doublings = 0;
    loop {
        let gv = g(hi)?;
        if gv.abs() < tol {
            return Ok(hi);
        }
        if (gv > 0.0) == (dir > 0.0) {
            break;
        }
        if doublings == MAX_DOUBLINGS {
            return Err(Error::Range { target: y, doublings });
        }
        lo = hi;
        hi *= 2.0;
        doublings += 1;
    }
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    // invariant: g(lo) < 0 < g(hi)
    while hi - lo > BRACKET_WIDTH {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm.abs() < tol {
            return Ok(mid);
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..NEWTON_STEPS {
        let gt = g(t)?;
        if gt.abs() < tol {
            return Ok(t);
        }
        if gt < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let next = t - gt / derivative(t)?;
        t = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    for _ in 0..200 {
        let gt = g(t)?;
        if gt.abs() < tol || hi - lo <= f64::EPSILON * t.abs().max(1.0) {
            return Ok(t);
        }
        if gt < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        t = 0.5 * (lo + hi);
    }
    Ok(t)
}

/// `Π_{k<i} φ_{m_k}(x_k)` for every multi-index.
fn prefix_factors(spec: BasisSpec, indices: &[Vec<usize>], prefix: &[f64]) -> Result<Vec<f64>> {
    let mut tables = Vec::with_capacity(prefix.len());
    for &xk in prefix {
        let mut v = vec![0.0; spec.dim()];
        spec.eval_all(xk, &mut v)?;
        tables.push(v);
    }
    Ok(indices
        .iter()
        .map(|m| tables.iter().enumerate().map(|(k, t)| t[m[k]]).product())
        .collect())
}

/// The component restricted to a line `t ↦ T(prefix, t)`.
struct Line {
    spec: BasisSpec,
    coeffs: Vec<f64>,
    rectifier: Rectifier,
}

impl Line {
    fn from_factors(f: &ExpansionFunction, factors: &[f64], rectifier: Rectifier) -> Self {
        let spec = f.spec();
        let last = f.dim() - 1;
        let mut coeffs = vec![0.0; spec.dim()];
        for ((m, c), p) in f.indices().iter().zip(f.coefficients()).zip(factors) {
            coeffs[m[last]] += c * p;
        }
        Self { spec, coeffs, rectifier }
    }

    fn slope(&self, t: f64, vals: &mut [f64], ders: &mut [f64]) -> Result<f64> {
        self.spec.eval_all_with_deriv(t, vals, ders)?;
        Ok(ders.iter().zip(&self.coeffs).map(|(d, c)| d * c).sum())
    }

    fn offset(&self) -> f64 {
        // every family has a closed form at zero, but evaluation is as cheap
        let mut vals = vec![0.0; self.spec.dim()];
        self.spec.eval_all(0.0, &mut vals).expect("zero lies in every basis domain");
        vals.iter().zip(&self.coeffs).map(|(v, c)| v * c).sum()
    }

    fn value(&self, t: f64, rule: &SegmentRule) -> Result<f64> {
        let n = self.spec.dim();
        let (mut vals, mut ders) = (vec![0.0; n], vec![0.0; n]);
        let mut acc = 0.0;
        if t != 0.0 {
            for (s, w) in rule.nodes.iter().zip(&rule.weights) {
                acc += w * self.rectifier.apply(self.slope(t * s, &mut vals, &mut ders)?);
            }
        }
        let v = self.offset() + t * acc;
        if !v.is_finite() {
            return Err(Error::NonFinite { context: "monotone component", index: 0, at: t, value: v });
        }
        Ok(v)
    }

    fn diag(&self, t: f64) -> Result<f64> {
        let n = self.spec.dim();
        let (mut vals, mut ders) = (vec![0.0; n], vec![0.0; n]);
        Ok(self.rectifier.apply(self.slope(t, &mut vals, &mut ders)?))
    }

    /// `(T, log r(g'), ∂T/∂c, ∂ log r(g')/∂c)` along the line.
    fn jet(&self, t: f64, rule: &SegmentRule) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
        let n = self.spec.dim();
        let (mut vals, mut ders) = (vec![0.0; n], vec![0.0; n]);
        self.spec.eval_all(0.0, &mut vals)?;
        let mut value: f64 = vals.iter().zip(&self.coeffs).map(|(v, c)| v * c).sum();
        let mut d_value = vals.clone();
        if t != 0.0 {
            for (s, w) in rule.nodes.iter().zip(&rule.weights) {
                let g = self.slope(t * s, &mut vals, &mut ders)?;
                value += t * w * self.rectifier.apply(g);
                let scale = t * w * self.rectifier.deriv(g);
                for (dv, d) in d_value.iter_mut().zip(&ders) {
                    *dv += scale * d;
                }
            }
        }
        let g = self.slope(t, &mut vals, &mut ders)?;
        let log_diag = self.rectifier.log_apply(g);
        let ld = self.rectifier.log_deriv(g);
        let d_log_diag = ders.iter().map(|d| ld * d).collect();
        if !value.is_finite() || !log_diag.is_finite() {
            return Err(Error::NonFinite { context: "monotone component", index: 0, at: t, value });
        }
        Ok((value, log_diag, d_value, d_log_diag))
    }
}

/// Expansion whose rectified slope is the constant `slope`:
/// `f(x) = r⁻¹(slope) x` written in a basis that contains linear functions.
pub fn linear_expansion(spec: BasisSpec, rectifier: Rectifier, slope: f64) -> Result<ExpansionFunction> {
    let a = rectifier.inverse(slope)?;
    if spec.max_degree < 1 {
        return Err(Error::InvalidArgument("a linear function needs degree >= 1".into()));
    }
    let mut c = vec![0.0; spec.dim()];
    c[1] = match spec.family {
        BasisFamily::Legendre => a,
        BasisFamily::HermitePolynomial => a / 2.0,
        BasisFamily::HermiteFunction => {
            return Err(Error::InvalidArgument("Hermite functions do not span linear functions".into()))
        }
    };
    ExpansionFunction::new(spec, c)
}
