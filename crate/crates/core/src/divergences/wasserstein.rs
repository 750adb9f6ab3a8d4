use crate::basis::{project_on_product_jittered, BasisSpec, ExpansionFunction};
use crate::distributions::Distribution1D;
use crate::error::{Error, Result};
use crate::maps::MapComponent;
use crate::optimize::Objective;
use crate::quadrature::{ProductNodes, QuadratureRule, WeightedNodes};

pub const DEFAULT_SMOOTHING: f64 = 1e-8;

/// `∫_0^1 |F_ν⁻¹(y) - S(F_η⁻¹(y))|^p dy` discretized at the nodes of a rule
/// on `[0, 1]` (endpoints with infinite quantiles excluded), with the basis bound at the reference quantiles so
/// the objective is a function of expansion coefficients.
#[derive(Debug, Clone)]
pub struct WpQuantileObjective {
    p: f64,
    smoothing: f64,
    weights: Vec<f64>,
    reference_quantiles: Vec<f64>,
    target_quantiles: Vec<f64>,
    spec: BasisSpec,
    design: Vec<Vec<f64>>,
}

impl WpQuantileObjective {
    pub fn new(
        p: f64,
        reference: &Distribution1D,
        target: &Distribution1D,
        rule: &QuadratureRule,
        spec: BasisSpec,
    ) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!("W_p needs finite p >= 1, got {p}")));
        }
        let (mut weights, mut reference_quantiles, mut target_quantiles) = (Vec::new(), Vec::new(), Vec::new());
        for (&y, &w) in rule.nodes().iter().zip(rule.weights()) {
            let (r, t) = (reference.quantile_closed(y)?, target.quantile_closed(y)?);
            // endpoints of unbounded supports carry no finite quantile
            if (y == 0.0 || y == 1.0) && !(r.is_finite() && t.is_finite()) {
                continue;
            }
            weights.push(w);
            reference_quantiles.push(r);
            target_quantiles.push(t);
        }
        for table in [&reference_quantiles, &target_quantiles] {
            if let Some(j) = table.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: "quantile table", index: j, at: rule.nodes()[j], value: table[j] });
            }
            if table.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidArgument("quantile nodes must be increasing in y".into()));
            }
        }
        if weights.is_empty() {
            return Err(Error::InsufficientData { usable: 0, needed: 1 });
        }
        let mut design = Vec::with_capacity(weights.len());
        for &x in &reference_quantiles {
            let mut row = vec![0.0; spec.dim()];
            spec.eval_all(x, &mut row)?;
            design.push(row);
        }
        Ok(Self { p, smoothing: DEFAULT_SMOOTHING, weights, reference_quantiles, target_quantiles, spec, design })
    }

    /// Smoothing `ε` of `|u| ≈ sqrt(u² + ε²)`, used only when `p == 1`.
    pub fn with_smoothing(mut self, eps: f64) -> Self {
        self.smoothing = eps;
        self
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn reference_quantiles(&self) -> &[f64] {
        &self.reference_quantiles
    }

    pub fn target_quantiles(&self) -> &[f64] {
        &self.target_quantiles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Reference quantile nodes as a probability measure.
    pub fn reference_nodes(&self) -> Result<WeightedNodes> {
        WeightedNodes::new(self.reference_quantiles.clone(), self.weights.clone())
    }

    /// Unsmoothed `∫|F_ν⁻¹ - S∘F_η⁻¹|^p` for any map.
    pub fn value_of(&self, map: &dyn MapComponent) -> Result<f64> {
        let mut acc = 0.0;
        for (j, ((&x, &t), &w)) in self.reference_quantiles.iter().zip(&self.target_quantiles).zip(&self.weights).enumerate() {
            let s = map.value(&[x])?;
            if !s.is_finite() {
                return Err(Error::NonFinite { context: "map at quantile node", index: j, at: x, value: s });
            }
            acc += w * (t - s).abs().powf(self.p);
        }
        Ok(acc)
    }

    /// `value_of(map)^{1/p}`.
    pub fn distance(&self, map: &dyn MapComponent) -> Result<f64> {
        Ok(self.value_of(map)?.powf(1.0 / self.p))
    }

    /// Unsmoothed objective for coefficients in the bound basis.
    pub fn exact_value(&self, coefficients: &[f64]) -> f64 {
        self.residuals(coefficients).zip(&self.weights).map(|(u, w)| w * u.abs().powf(self.p)).sum()
    }

    fn residuals<'a>(&'a self, c: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.design.iter().zip(&self.target_quantiles).map(move |(row, t)| t - dot(row, c))
    }

    fn penalty(&self, u: f64) -> (f64, f64) {
        if self.p == 1.0 {
            let r = (u * u + self.smoothing * self.smoothing).sqrt();
            (r, u / r)
        } else if self.p == 2.0 {
            (u * u, 2.0 * u)
        } else {
            let a = u.abs();
            (a.powf(self.p), self.p * a.powf(self.p - 1.0) * u.signum())
        }
    }

    pub fn expansion(&self, coefficients: Vec<f64>) -> Result<ExpansionFunction> {
        ExpansionFunction::new(self.spec, coefficients)
    }
}

impl Objective for WpQuantileObjective {
    fn value(&self, c: &[f64]) -> f64 {
        self.residuals(c).zip(&self.weights).map(|(u, w)| w * self.penalty(u).0).sum()
    }

    fn gradient(&self, c: &[f64], grad: &mut [f64]) {
        self.value_and_gradient(c, grad);
    }

    fn value_and_gradient(&self, c: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for ((row, t), w) in self.design.iter().zip(&self.target_quantiles).zip(&self.weights) {
            let u = t - dot(row, c);
            let (v, dv) = self.penalty(u);
            total += w * v;
            // d u / d c = -row
            for (g, b) in grad.iter_mut().zip(row) {
                *g -= w * dv * b;
            }
        }
        total
    }
}

/// Closed-form W₂ minimizer over the span of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct W2Fit {
    pub function: ExpansionFunction,
    /// `W₂` between the target and the fitted pushforward, at quadrature
    /// resolution.
    pub distance: f64,
    pub condition: f64,
}

/// Solves the normal equations `A α = b` with
/// `A_ij = ∫ h_i(F_η⁻¹(y)) h_j(F_η⁻¹(y)) dy` and
/// `b_i = ∫ F_ν⁻¹(y) h_i(F_η⁻¹(y)) dy`.
pub fn w2_closed_form(
    spec: BasisSpec,
    reference: &Distribution1D,
    target: &Distribution1D,
    rule: &QuadratureRule,
) -> Result<W2Fit> {
    let obj = WpQuantileObjective::new(2.0, reference, target, rule, spec)?;
    w2_from_objective(&obj, 0.0)
}

/// Normal equations of the `W₂` objective solved with `jitter · trace(A) / k`
/// added to the diagonal of `A`. The objective's `p` is ignored.
pub fn w2_from_objective(obj: &WpQuantileObjective, jitter: f64) -> Result<W2Fit> {
    let nodes = ProductNodes::from(&obj.reference_nodes()?);
    let mut targets = obj.target_quantiles.iter();
    let projection =
        project_on_product_jittered(|_| *targets.next().expect("one target per node"), obj.spec, 1, &nodes, jitter)?;
    Ok(W2Fit { function: projection.function, distance: projection.residual, condition: projection.condition })
}

/// `((1/N) Σ |x_(i) - y_(i)|^p)^{1/p}` over sorted samples.
pub fn empirical_wasserstein_1d(xs: &[f64], ys: &[f64], p: f64) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!("sample sizes differ: {} vs {}", xs.len(), ys.len())));
    }
    if xs.is_empty() {
        return Err(Error::InsufficientData { usable: 0, needed: 1 });
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("W_p needs p >= 1, got {p}")));
    }
    let sorted = |v: &[f64]| -> Result<Vec<f64>> {
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "sample", index: i, at: i as f64, value: v[i] });
        }
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(s)
    };
    let (a, b) = (sorted(xs)?, sorted(ys)?);
    let mean = a.iter().zip(&b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>() / a.len() as f64;
    Ok(mean.powf(1.0 / p))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{ExactTransport, FnMap, TransportDirection};
    use crate::optimize::{bfgs_minimize, BfgsOptions};
    use crate::quadrature::Interval;
    use approx::assert_abs_diff_eq;

    fn cc(n: usize) -> QuadratureRule {
        QuadratureRule::clenshaw_curtis(n, Interval::UNIT).unwrap()
    }

    #[test]
    fn exact_transport_has_zero_objective() {
        let nu = Distribution1D::power_pushforward(1).unwrap();
        let obj = WpQuantileObjective::new(2.0, &Distribution1D::UniformSym, &nu, &cc(200), BasisSpec::legendre(2)).unwrap();
        let t = ExactTransport::new(&Distribution1D::UniformSym, &nu, TransportDirection::Pushforward);
        assert!(obj.value_of(&t).unwrap() < 1e-10);
    }

    #[test]
    fn unit_shift() {
        let u = Distribution1D::UniformSym;
        let obj = WpQuantileObjective::new(2.0, &u, &u, &cc(50), BasisSpec::legendre(1)).unwrap();
        let shift = FnMap { value: |x: f64| x + 1.0, derivative: |_| 1.0 };
        assert_abs_diff_eq!(obj.value_of(&shift).unwrap(), 1.0, epsilon = 1e-12);
        // same through coefficients: x + 1 = P0 + P1
        assert_abs_diff_eq!(obj.exact_value(&[1.0, 1.0]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_is_optimal_for_equal_measures() {
        let u = Distribution1D::UniformSym;
        let fit = w2_closed_form(BasisSpec::legendre(4), &u, &u, &cc(100)).unwrap();
        let c = fit.function.coefficients();
        assert_abs_diff_eq!(c[1], 1.0, epsilon = 1e-12);
        for k in [0, 2, 3, 4] {
            assert_abs_diff_eq!(c[k], 0.0, epsilon = 1e-12);
        }
        assert!(fit.distance < 1e-12);
    }

    #[test]
    fn legendre_gram_is_diagonal() {
        let obj = WpQuantileObjective::new(2.0, &Distribution1D::UniformSym, &Distribution1D::UniformSym, &cc(300), BasisSpec::legendre(5))
            .unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let a: f64 = obj.design.iter().zip(&obj.weights).map(|(r, w)| w * r[i] * r[j]).sum();
                let expect = if i == j { 1.0 / (2 * i + 1) as f64 } else { 0.0 };
                assert_abs_diff_eq!(a, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn table_values_degree_ten() {
        let nu1 = Distribution1D::power_pushforward(1).unwrap();
        let fit = w2_closed_form(BasisSpec::legendre(10), &Distribution1D::UniformSym, &nu1, &cc(1000)).unwrap();
        assert!((fit.distance - 2.038e-3).abs() < 5e-6, "{}", fit.distance);
        let nu3 = Distribution1D::power_pushforward(3).unwrap();
        let fit = w2_closed_form(BasisSpec::legendre(10), &Distribution1D::UniformSym, &nu3, &cc(1000)).unwrap();
        assert!((fit.distance - 5.804e-5).abs() < 5e-7, "{}", fit.distance);
    }

    #[test]
    fn bfgs_matches_closed_form() {
        let nu = Distribution1D::power_pushforward(1).unwrap();
        let obj = WpQuantileObjective::new(2.0, &Distribution1D::UniformSym, &nu, &cc(200), BasisSpec::legendre(4)).unwrap();
        let closed = w2_from_objective(&obj, 0.0).unwrap();
        let r = bfgs_minimize(&obj, &[0.0; 5], &BfgsOptions { tol: 1e-13, ..Default::default() }).unwrap();
        for (a, b) in r.coefficients.iter().zip(closed.function.coefficients()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let nu = Distribution1D::gumbel(1.0, 2.0).unwrap();
        for p in [1.0, 1.5, 2.0, 3.0] {
            let obj = WpQuantileObjective::new(p, &Distribution1D::StdGaussian, &nu, &cc(60), BasisSpec::hermite_function(4))
                .unwrap()
                .with_smoothing(1e-3);
            let c = [0.3, 1.1, -0.4, 0.2, 0.05];
            let mut g = vec![0.0; 5];
            obj.gradient(&c, &mut g);
            for k in 0..5 {
                let h = 1e-6;
                let (mut up, mut dn) = (c, c);
                up[k] += h;
                dn[k] -= h;
                let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
                assert!((g[k] - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "p={p} k={k}: {} vs {fd}", g[k]);
            }
        }
    }

    #[test]
    fn empirical_examples() {
        assert_eq!(empirical_wasserstein_1d(&[0.3, -1.0], &[-1.0, 0.3], 2.0).unwrap(), 0.0);
        for p in [1.0, 2.0, 3.5] {
            assert_abs_diff_eq!(empirical_wasserstein_1d(&[1.0, 0.0], &[0.5, 1.5], p).unwrap(), 0.5, epsilon = 1e-15);
        }
        assert!(empirical_wasserstein_1d(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }
}
