use super::MapComponent;
use crate::distributions::Distribution1D;
use crate::error::Result;

/// Which way a quantile-composition map transports mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportDirection {
    /// `F_ν⁻¹ ∘ F_η`, carrying the reference `η` onto the target `ν`.
    Pushforward,
    /// `F_η⁻¹ ∘ F_ν`, carrying the target `ν` back onto the reference `η`.
    Pullback,
}

/// Monotone rearrangement `F_to⁻¹ ∘ F_from` between two continuous
/// distributions on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTransport {
    from: Distribution1D,
    to: Distribution1D,
}

impl ExactTransport {
    pub fn between(from: Distribution1D, to: Distribution1D) -> Self {
        Self { from, to }
    }

    /// Ground-truth map for reference `eta` and target `nu`.
    pub fn new(eta: &Distribution1D, nu: &Distribution1D, direction: TransportDirection) -> Self {
        match direction {
            TransportDirection::Pushforward => Self::between(eta.clone(), nu.clone()),
            TransportDirection::Pullback => Self::between(nu.clone(), eta.clone()),
        }
    }

    pub fn source(&self) -> &Distribution1D {
        &self.from
    }

    pub fn destination(&self) -> &Distribution1D {
        &self.to
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.to.transfer_from(&self.from, x)
    }

    /// `p_from(x) / p_to(T(x))`.
    pub fn derivative(&self, x: f64) -> f64 {
        (self.from.log_pdf(x) - self.to.log_pdf(self.apply(x))).exp()
    }
}

impl MapComponent for ExactTransport {
    fn input_dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.apply(x[0]))
    }
    fn diag_deriv(&self, x: &[f64]) -> Result<f64> {
        Ok(self.derivative(x[0]))
    }
    fn log_diag_deriv(&self, x: &[f64]) -> Result<f64> {
        Ok(self.from.log_pdf(x[0]) - self.to.log_pdf(self.apply(x[0])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::gaussian_quantile;
    use approx::assert_abs_diff_eq;

    #[test]
    fn same_distribution_is_identity() {
        for d in [Distribution1D::StdGaussian, Distribution1D::gumbel(1.0, 2.0).unwrap(), Distribution1D::UniformSym] {
            let t = ExactTransport::new(&d, &d, TransportDirection::Pushforward);
            for i in 0..100 {
                let x = -0.99 + 1.98 * i as f64 / 99.0;
                assert_abs_diff_eq!(t.apply(x), x, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn uniform_to_power_pushforward() {
        let nu = Distribution1D::power_pushforward(3).unwrap();
        let t = ExactTransport::new(&Distribution1D::UniformSym, &nu, TransportDirection::Pushforward);
        for x in [-0.9, -0.25, 0.0, 0.3, 0.8] {
            assert_abs_diff_eq!(t.apply(x), x.abs().powi(6) * x.signum(), epsilon = 1e-14);
        }
    }

    #[test]
    fn gumbel_to_gaussian_at_zero() {
        let gumbel = Distribution1D::gumbel(0.0, 1.0).unwrap();
        let t = ExactTransport::new(&Distribution1D::StdGaussian, &gumbel, TransportDirection::Pullback);
        let expected = gaussian_quantile((-1.0_f64).exp());
        assert_abs_diff_eq!(t.apply(0.0), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(t.apply(0.0), -0.337_474_963_764_202_45, epsilon = 1e-12);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let gumbel = Distribution1D::gumbel(0.0, 1.0).unwrap();
        let t = ExactTransport::new(&Distribution1D::StdGaussian, &gumbel, TransportDirection::Pullback);
        for x in [-1.5, 0.0, 2.0] {
            let h = 1e-5;
            let fd = (t.apply(x + h) - t.apply(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(t.derivative(x), fd, epsilon = 1e-8);
        }
    }
}
