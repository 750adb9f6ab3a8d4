//! Transport maps: plain expansions, integrated monotone components,
//! lower-triangular assemblies and exact quantile-composition maps.

mod exact;
mod monotone;
mod rectifier;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use exact::{ExactTransport, TransportDirection};
pub use monotone::{
    linear_expansion, solve_increasing, ComponentJet, MonotoneComponent, DEFAULT_SEGMENT_ORDER, MAX_SEGMENT_ORDER, SEGMENT_AGREEMENT,
};
pub use rectifier::Rectifier;

use crate::basis::{BasisSpec, ExpansionFunction};
use crate::distributions::Distribution1D;
use crate::error::{Error, Result};

/// A scalar function of `x_1..x_i` with a derivative in its last variable.
pub trait MapComponent: Send + Sync {
    fn input_dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn diag_deriv(&self, x: &[f64]) -> Result<f64>;

    /// `ln ∂_i T(x)`; implementors override when the derivative can underflow.
    fn log_diag_deriv(&self, x: &[f64]) -> Result<f64> {
        Ok(self.diag_deriv(x)?.ln())
    }
}

impl MapComponent for ExpansionFunction {
    fn input_dim(&self) -> usize {
        self.dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.eval(x)
    }
    fn diag_deriv(&self, x: &[f64]) -> Result<f64> {
        ExpansionFunction::diag_deriv(self, x)
    }
}

/// Closure-backed one-dimensional map.
pub struct FnMap<F, G> {
    pub value: F,
    pub derivative: G,
}

impl<F, G> MapComponent for FnMap<F, G>
where
    F: Fn(f64) -> f64 + Send + Sync,
    G: Fn(f64) -> f64 + Send + Sync,
{
    fn input_dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok((self.value)(x[0]))
    }
    fn diag_deriv(&self, x: &[f64]) -> Result<f64> {
        Ok((self.derivative)(x[0]))
    }
}

/// One output coordinate of a triangular map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Component {
    /// Unconstrained expansion; monotonicity is not enforced.
    Expansion {
        basis: BasisSpec,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        dim: usize,
        coefficients: Vec<f64>,
    },
    Monotone(MonotoneComponent),
}

fn one() -> usize {
    1
}

fn is_one(d: &usize) -> bool {
    *d == 1
}

impl Component {
    pub fn expansion(f: &ExpansionFunction) -> Self {
        Component::Expansion { basis: f.spec(), dim: f.dim(), coefficients: f.coefficients().to_vec() }
    }

    pub fn dim(&self) -> usize {
        match self {
            Component::Expansion { dim, .. } => *dim,
            Component::Monotone(c) => c.dim(),
        }
    }

    pub fn is_monotone(&self) -> bool {
        matches!(self, Component::Monotone(_))
    }

    fn as_expansion(&self) -> Result<Option<ExpansionFunction>> {
        match self {
            Component::Expansion { basis, dim, coefficients } => {
                Ok(Some(ExpansionFunction::multivariate(*basis, *dim, coefficients.clone())?))
            }
            Component::Monotone(_) => Ok(None),
        }
    }
}

impl MapComponent for Component {
    fn input_dim(&self) -> usize {
        self.dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        match self {
            Component::Monotone(c) => c.eval(x),
            e => e.as_expansion()?.expect("expansion variant").eval(x),
        }
    }
    fn diag_deriv(&self, x: &[f64]) -> Result<f64> {
        match self {
            Component::Monotone(c) => c.diag_deriv(x),
            e => e.as_expansion()?.expect("expansion variant").diag_deriv(x),
        }
    }
    fn log_diag_deriv(&self, x: &[f64]) -> Result<f64> {
        match self {
            Component::Monotone(c) => c.log_diag_deriv(x),
            e => Ok(e.diag_deriv(x)?.ln()),
        }
    }
}

impl From<MonotoneComponent> for Component {
    fn from(c: MonotoneComponent) -> Self {
        Component::Monotone(c)
    }
}

impl From<ExpansionFunction> for Component {
    fn from(f: ExpansionFunction) -> Self {
        Component::expansion(&f)
    }
}

/// `T(x) = (T_1(x_1), T_2(x_1, x_2), ..., T_d(x_1..x_d))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TriangularRecord", into = "TriangularRecord")]
pub struct TriangularMap {
    components: Vec<Component>,
}

#[derive(Serialize, Deserialize)]
struct TriangularRecord {
    components: Vec<Component>,
}

impl TryFrom<TriangularRecord> for TriangularMap {
    type Error = Error;
    fn try_from(r: TriangularRecord) -> Result<Self> {
        TriangularMap::new(r.components)
    }
}

impl From<TriangularMap> for TriangularRecord {
    fn from(m: TriangularMap) -> Self {
        TriangularRecord { components: m.components }
    }
}

impl TriangularMap {
    /// Component `i` (zero-based) must take `i + 1` inputs.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("a triangular map needs at least one component".into()));
        }
        for (i, c) in components.iter().enumerate() {
            if c.dim() != i + 1 {
                return Err(Error::InvalidArgument(format!(
                    "component {i} takes {} inputs, expected {}",
                    c.dim(),
                    i + 1
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn is_monotone(&self) -> bool {
        self.components.iter().all(Component::is_monotone)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "point of dimension {} for a {}-dimensional map",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        self.components.iter().enumerate().map(|(i, c)| c.value(&x[..=i])).collect()
    }

    /// Diagonal partials `∂_i T_i(x)`.
    pub fn diag_derivs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        self.components.iter().enumerate().map(|(i, c)| c.diag_deriv(&x[..=i])).collect()
    }

    /// Forward substitution `T(x) = y`. Requires monotone components.
    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check(y)?;
        let mut x = Vec::with_capacity(self.dim());
        for (c, &yi) in self.components.iter().zip(y) {
            match c {
                Component::Monotone(m) => {
                    let t = m.inverse(&x, yi)?;
                    x.push(t);
                }
                Component::Expansion { .. } => {
                    return Err(Error::InvalidArgument("inverse requires monotone components".into()))
                }
            }
        }
        Ok(x)
    }

    /// `log p_η(T(x)) + Σ_i log ∂_i T_i(x)` for the product reference
    /// `η^{⊗d}`.
    pub fn pullback_logdensity(&self, reference: &Distribution1D, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let mut total = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            let m = match c {
                Component::Monotone(m) => m,
                Component::Expansion { .. } => {
                    return Err(Error::InvalidArgument("pullback density requires monotone components".into()))
                }
            };
            let xi = &x[..=i];
            total += reference.log_pdf(m.eval(xi)?) + m.log_diag_deriv(xi)?;
        }
        Ok(total)
    }

    /// Draws `count` reference points and maps each through `T`.
    pub fn pushforward_sample<R: Rng + ?Sized>(
        &self,
        reference: &Distribution1D,
        rng: &mut R,
        count: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let d = self.dim();
        (0..count)
            .map(|_| {
                let x = reference.sample(rng, d);
                self.eval(&x)
            })
            .collect()
    }
}

/// Draws `count` reference points and maps each through a 1D map.
pub fn pushforward_sample<R: Rng + ?Sized>(
    map: &dyn MapComponent,
    reference: &Distribution1D,
    rng: &mut R,
    count: usize,
) -> Result<Vec<f64>> {
    if map.input_dim() != 1 {
        return Err(Error::InvalidArgument("pushforward_sample takes a one-dimensional map".into()));
    }
    reference.sample(rng, count).into_iter().map(|x| map.value(&[x])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::substream;
    use crate::quadrature::{Interval, QuadratureRule};
    use approx::assert_abs_diff_eq;

    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

    fn identity_component(dim: usize, slope: f64) -> MonotoneComponent {
        let spec = BasisSpec::hermite_polynomial(1);
        let lin = linear_expansion(spec, Rectifier::Softplus, slope).unwrap();
        let mut coeffs = vec![0.0; crate::basis::total_degree_indices(dim, 1).len()];
        // the last graded index of degree 1 is e_dim
        coeffs[dim] = lin.coefficients()[1];
        let f = ExpansionFunction::multivariate(spec, dim, coeffs).unwrap();
        MonotoneComponent::new(f, Rectifier::Softplus).unwrap()
    }

    #[test]
    fn identity_pullback_is_reference() {
        let map = TriangularMap::new(vec![identity_component(1, 1.0).into(), identity_component(2, 1.0).into()]).unwrap();
        let x = [0.0, 0.0];
        assert_abs_diff_eq!(map.eval(&x).unwrap()[1], 0.0, epsilon = 1e-14);
        let lp = map.pullback_logdensity(&Distribution1D::StdGaussian, &x).unwrap();
        assert_abs_diff_eq!(lp, -2.0 * LN_SQRT_2PI, epsilon = 1e-12);
        let y = [0.7, -1.2];
        let tx = map.eval(&y).unwrap();
        assert_abs_diff_eq!(tx[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(tx[1], -1.2, epsilon = 1e-12);
    }

    #[test]
    fn doubling_map_pullback() {
        let map = TriangularMap::new(vec![identity_component(1, 2.0).into()]).unwrap();
        let lp = map.pullback_logdensity(&Distribution1D::StdGaussian, &[0.0]).unwrap();
        assert_abs_diff_eq!(lp, 2.0_f64.ln() - LN_SQRT_2PI, epsilon = 1e-12);
    }

    #[test]
    fn pullback_density_normalizes() {
        let f = ExpansionFunction::new(BasisSpec::hermite_function(3), vec![0.2, 0.5, -0.3, 0.1]).unwrap();
        let map = TriangularMap::new(vec![MonotoneComponent::new(f, Rectifier::Softplus).unwrap().into()]).unwrap();
        let rule = QuadratureRule::gauss_legendre(400, Interval::new(-40.0, 40.0).unwrap()).unwrap();
        let mass = rule.integrate(|x| map.pullback_logdensity(&Distribution1D::StdGaussian, &[x]).unwrap().exp()).unwrap();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn triangular_inverse_round_trip() {
        let f1 = ExpansionFunction::new(BasisSpec::hermite_function(2), vec![0.1, 0.4, -0.2]).unwrap();
        let f2 = ExpansionFunction::multivariate(BasisSpec::hermite_function(2), 2, vec![0.0, 0.3, 0.5, -0.2, 0.1, 0.2])
            .unwrap();
        let map = TriangularMap::new(vec![
            MonotoneComponent::new(f1, Rectifier::Softplus).unwrap().into(),
            MonotoneComponent::new(f2, Rectifier::ShiftedElu).unwrap().into(),
        ])
        .unwrap();
        let x = [0.37, -1.1];
        let back = map.inverse(&map.eval(&x).unwrap()).unwrap();
        assert_abs_diff_eq!(back[0], x[0], epsilon = 1e-9);
        assert_abs_diff_eq!(back[1], x[1], epsilon = 1e-9);
    }

    #[test]
    fn wrong_component_dims_rejected() {
        let c = identity_component(2, 1.0);
        assert!(TriangularMap::new(vec![c.into()]).is_err());
    }

    #[test]
    fn expansion_map_has_no_inverse() {
        let f = ExpansionFunction::new(BasisSpec::legendre(1), vec![0.0, 1.0]).unwrap();
        let map = TriangularMap::new(vec![f.into()]).unwrap();
        assert!(!map.is_monotone());
        assert!(map.inverse(&[0.2]).is_err());
    }

    #[test]
    fn empty_sample() {
        let f = ExpansionFunction::new(BasisSpec::legendre(1), vec![0.0, 1.0]).unwrap();
        let mut rng = substream(1, "empty");
        assert!(pushforward_sample(&f, &Distribution1D::UniformSym, &mut rng, 0).unwrap().is_empty());
    }

    #[test]
    fn json_shape() {
        let f = ExpansionFunction::new(BasisSpec::legendre(1), vec![0.0, 1.0]).unwrap();
        let m = MonotoneComponent::new(f.clone(), Rectifier::Softplus).unwrap();
        let map = TriangularMap::new(vec![m.into()]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&map).unwrap();
        let c = &v["components"][0];
        assert_eq!(c["type"], "monotone");
        assert_eq!(c["rectifier"], "softplus");
        assert_eq!(c["basis"]["family"], "legendre");
        assert_eq!(c["coefficients"], serde_json::json!([0.0, 1.0]));
        let back: TriangularMap = serde_json::from_value(v).unwrap();
        assert_eq!(back, map);

        let e = serde_json::to_value(Component::from(f)).unwrap();
        assert_eq!(e["type"], "expansion");
    }
}
