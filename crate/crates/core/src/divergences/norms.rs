use crate::distributions::Distribution1D;
use crate::error::{Error, Result};
use crate::maps::MapComponent;
use crate::quadrature::{Interval, ProductNodes, QuadratureRule, WeightedNodes};

/// Probability nodes for a reference measure: Gauss–Hermite for the standard
/// Gaussian, halved Gauss–Legendre for the uniform on `[-1, 1]`, and
/// Gauss–Legendre pushed through the quantile function otherwise.
pub fn reference_nodes(reference: &Distribution1D, n: usize) -> Result<WeightedNodes> {
    match reference {
        Distribution1D::StdGaussian => WeightedNodes::gauss_hermite(n),
        Distribution1D::UniformSym => {
            let rule = QuadratureRule::gauss_legendre(n, Interval::SYMMETRIC)?;
            WeightedNodes::new(rule.nodes().to_vec(), rule.weights().iter().map(|w| w / 2.0).collect())
        }
        other => other.quantile_nodes(&QuadratureRule::gauss_legendre(n, Interval::UNIT)?),
    }
}

/// Uniform measure on `[-1, 1]` by Gauss–Legendre of `n` points on each of
/// `[-1, 0]` and `[0, 1]`, for integrands with a kink at the origin.
pub fn split_uniform_nodes(n: usize) -> Result<WeightedNodes> {
    let left = QuadratureRule::gauss_legendre(n, Interval::new(-1.0, 0.0)?)?;
    let right = QuadratureRule::gauss_legendre(n, Interval::new(0.0, 1.0)?)?;
    let points = left.nodes().iter().chain(right.nodes()).copied().collect();
    let weights = left.weights().iter().chain(right.weights()).map(|w| w / 2.0).collect();
    WeightedNodes::new(points, weights)
}

/// Equal-weight measure on a sample.
pub fn empirical_nodes(samples: &[f64]) -> Result<WeightedNodes> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { usable: 0, needed: 1 });
    }
    let w = 1.0 / samples.len() as f64;
    WeightedNodes::new(samples.to_vec(), vec![w; samples.len()])
}

fn check_dims(f: &dyn MapComponent, g: &dyn MapComponent, nodes: &ProductNodes) -> Result<()> {
    if f.input_dim() != g.input_dim() || f.input_dim() != nodes.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimensions disagree: {} vs {} on {}-dimensional nodes",
            f.input_dim(),
            g.input_dim(),
            nodes.dim()
        )));
    }
    Ok(())
}

/// `‖F - G‖_{L²_η}` against a discrete reference measure.
pub fn l2_map_error(f: &dyn MapComponent, g: &dyn MapComponent, nodes: &ProductNodes) -> Result<f64> {
    check_dims(f, g, nodes)?;
    let mut acc = 0.0;
    for (x, w) in nodes.iter() {
        acc += w * (f.value(x)? - g.value(x)?).powi(2);
    }
    Ok(acc.sqrt())
}

/// `(‖F - G‖²_{L²_η} + ‖∂_i F - ∂_i G‖²_{L²_η})^{1/2}`.
pub fn v_norm_distance(f: &dyn MapComponent, g: &dyn MapComponent, nodes: &ProductNodes) -> Result<f64> {
    check_dims(f, g, nodes)?;
    let mut acc = 0.0;
    for (x, w) in nodes.iter() {
        acc += w * ((f.value(x)? - g.value(x)?).powi(2) + (f.diag_deriv(x)? - g.diag_deriv(x)?).powi(2));
    }
    Ok(acc.sqrt())
}

/// `‖F‖_{L^p_η}` of the pointwise difference, for any `p >= 1`.
pub fn lp_map_error(f: &dyn MapComponent, g: &dyn MapComponent, nodes: &ProductNodes, p: f64) -> Result<f64> {
    check_dims(f, g, nodes)?;
    let mut acc = 0.0;
    for (x, w) in nodes.iter() {
        acc += w * (f.value(x)? - g.value(x)?).abs().powf(p);
    }
    Ok(acc.powf(1.0 / p))
}
