use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::Distribution1D;
use crate::error::{Error, Result};
use crate::maps::{Component, MapComponent, MonotoneComponent, TriangularMap};
use crate::optimize::Objective;

/// Weight on `|S(x)|²` in the per-sample loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodForm {
    /// `|S|²/2 - log S'`, the Gaussian negative log-likelihood.
    #[default]
    Exact,
    /// `|S|² - log S'`, without the one-half.
    Unhalved,
}

impl LikelihoodForm {
    fn weight(&self) -> f64 {
        match self {
            LikelihoodForm::Exact => 0.5,
            LikelihoodForm::Unhalved => 1.0,
        }
    }
}

const SAMPLE_CHUNK: usize = 256;

/// `(1/N) Σ_j Σ_i [ w |S_i(x^j)|² - log ∂_i S_i(x^j) ]` for a monotone
/// triangular map with a standard Gaussian reference. Coefficients of all
/// components are concatenated in order.
#[derive(Debug, Clone)]
pub struct KlPullbackObjective {
    samples: Vec<Vec<f64>>,
    template: Vec<MonotoneComponent>,
    offsets: Vec<usize>,
    form: LikelihoodForm,
}

impl KlPullbackObjective {
    pub fn new(samples: Vec<Vec<f64>>, template: Vec<MonotoneComponent>) -> Result<Self> {
        let d = template.len();
        if d == 0 {
            return Err(Error::InvalidArgument("at least one component required".into()));
        }
        if samples.is_empty() {
            return Err(Error::InsufficientData { usable: 0, needed: 1 });
        }
        for (i, c) in template.iter().enumerate() {
            if c.dim() != i + 1 {
                return Err(Error::InvalidArgument(format!("component {i} takes {} inputs", c.dim())));
            }
        }
        for (j, x) in samples.iter().enumerate() {
            if x.len() != d {
                return Err(Error::InvalidArgument(format!("sample {j} has dimension {}, expected {d}", x.len())));
            }
            if let Some(v) = x.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: "training sample", index: j, at: j as f64, value: *v });
            }
        }
        let mut offsets = vec![0];
        for c in &template {
            offsets.push(offsets.last().unwrap() + c.expansion().len());
        }
        Ok(Self { samples, template, offsets, form: LikelihoodForm::Exact })
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(samples: &[f64], template: MonotoneComponent) -> Result<Self> {
        Self::new(samples.iter().map(|&x| vec![x]).collect(), vec![template])
    }

    pub fn with_form(mut self, form: LikelihoodForm) -> Self {
        self.form = form;
        self
    }

    pub fn form(&self) -> LikelihoodForm {
        self.form
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_coefficients(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Concatenated coefficients of the template.
    pub fn initial(&self) -> Vec<f64> {
        self.template.iter().flat_map(|c| c.expansion().coefficients().to_vec()).collect()
    }

    /// Components with the given coefficients.
    pub fn components(&self, coefficients: &[f64]) -> Result<Vec<MonotoneComponent>> {
        if coefficients.len() != self.n_coefficients() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for {} parameters",
                coefficients.len(),
                self.n_coefficients()
            )));
        }
        self.template
            .iter()
            .enumerate()
            .map(|(i, c)| c.with_coefficients(coefficients[self.offsets[i]..self.offsets[i + 1]].to_vec()))
            .collect()
    }

    pub fn map(&self, coefficients: &[f64]) -> Result<TriangularMap> {
        TriangularMap::new(self.components(coefficients)?.into_iter().map(Component::from).collect())
    }

    /// Objective and gradient, reporting failures instead of returning
    /// infinity.
    pub fn evaluate(&self, coefficients: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        let comps = self.components(coefficients)?;
        let k = self.n_coefficients();
        let w = self.form.weight();
        let want_grad = grad.is_some();
        // Fixed chunks summed in order keep the result independent of the
        // thread count.
        let partials = self
            .samples
            .par_chunks(SAMPLE_CHUNK)
            .map(|chunk| -> Result<(f64, Vec<f64>)> {
                let mut g = if want_grad { vec![0.0; k] } else { Vec::new() };
                let mut v = 0.0;
                for x in chunk {
                    for (i, c) in comps.iter().enumerate() {
                        let xi = &x[..=i];
                        if !want_grad {
                            let s = c.eval(xi)?;
                            v += w * s * s - c.log_diag_deriv(xi)?;
                            continue;
                        }
                        let jet = c.jet(xi)?;
                        v += w * jet.value * jet.value - jet.log_diag;
                        let gs = &mut g[self.offsets[i]..self.offsets[i + 1]];
                        for ((gk, dv), dl) in gs.iter_mut().zip(&jet.d_value).zip(&jet.d_log_diag) {
                            *gk += 2.0 * w * jet.value * dv - dl;
                        }
                    }
                }
                Ok((v, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        let mut g = if want_grad { vec![0.0; k] } else { Vec::new() };
        for (v, gc) in partials {
            total += v;
            for (a, b) in g.iter_mut().zip(&gc) {
                *a += b;
            }
        }
        let n = self.samples.len() as f64;
        if let Some(out) = grad {
            for (o, gi) in out.iter_mut().zip(&g) {
                *o = gi / n;
            }
        }
        Ok(total / n)
    }
}

impl Objective for KlPullbackObjective {
    fn value(&self, c: &[f64]) -> f64 {
        self.evaluate(c, None).unwrap_or(f64::INFINITY)
    }

    fn gradient(&self, c: &[f64], grad: &mut [f64]) {
        self.value_and_gradient(c, grad);
    }

    fn value_and_gradient(&self, c: &[f64], grad: &mut [f64]) -> f64 {
        match self.evaluate(c, Some(grad)) {
            Ok(v) => v,
            Err(_) => {
                grad.iter_mut().for_each(|g| *g = f64::NAN);
                f64::INFINITY
            }
        }
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// `(1/M) Σ [log p_ν(x) - log p_{T^♯η}(x)]` over samples of `ν`, for a
/// one-dimensional monotone map and a standard Gaussian reference.
pub fn kl_estimate(target: &Distribution1D, map: &dyn MapComponent, samples: &[f64]) -> Result<KlEstimate> {
    if map.input_dim() != 1 {
        return Err(Error::InvalidArgument("kl_estimate takes a one-dimensional map".into()));
    }
    let terms: Vec<f64> = samples
        .par_iter()
        .map(|&x| -> Result<f64> {
            let t = map.value(&[x])?;
            let log_d = map.log_diag_deriv(&[x])?;
            if log_d.is_nan() {
                return Err(Error::NotMonotone { at: x, derivative: map.diag_deriv(&[x])? });
            }
            let pull = Distribution1D::StdGaussian.log_pdf(t) + log_d;
            Ok(target.log_pdf(x) - pull)
        })
        .collect::<Result<_>>()?;
    mean_and_error(&terms)
}

/// Same estimator for a triangular map against the product target `ν^{⊗d}`.
pub fn kl_estimate_triangular(target: &Distribution1D, map: &TriangularMap, samples: &[Vec<f64>]) -> Result<KlEstimate> {
    let terms: Vec<f64> = samples
        .par_iter()
        .map(|x| -> Result<f64> {
            let log_target: f64 = x.iter().map(|&v| target.log_pdf(v)).sum();
            Ok(log_target - map.pullback_logdensity(&Distribution1D::StdGaussian, x)?)
        })
        .collect::<Result<_>>()?;
    mean_and_error(&terms)
}

fn mean_and_error(terms: &[f64]) -> Result<KlEstimate> {
    let m = terms.len();
    if m < 2 {
        return Err(Error::InsufficientData { usable: m, needed: 2 });
    }
    if let Some(j) = terms.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "estimator term", index: j, at: j as f64, value: terms[j] });
    }
    let mean = terms.iter().sum::<f64>() / m as f64;
    let var = terms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    Ok(KlEstimate { value: mean, std_error: (var / m as f64).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisSpec, ExpansionFunction};
    use crate::distributions::substream;
    use crate::maps::{linear_expansion, ExactTransport, FnMap, Rectifier, TransportDirection};
    use approx::assert_abs_diff_eq;

    fn identity() -> MonotoneComponent {
        let f = linear_expansion(BasisSpec::hermite_polynomial(1), Rectifier::Softplus, 1.0).unwrap();
        MonotoneComponent::new(f, Rectifier::Softplus).unwrap()
    }

    #[test]
    fn identity_single_zero_sample() {
        let obj = KlPullbackObjective::scalar(&[0.0], identity()).unwrap();
        assert_abs_diff_eq!(obj.value(&obj.initial()), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_on_gaussian_samples() {
        let n = 20_000;
        let xs = Distribution1D::StdGaussian.sample(&mut substream(7, "kl-identity"), n);
        let obj = KlPullbackObjective::scalar(&xs, identity()).unwrap();
        let v = obj.value(&obj.initial());
        assert!((v - 0.5).abs() < 3.0 / (n as f64).sqrt(), "{v}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let xs = Distribution1D::gumbel(0.0, 1.0).unwrap().sample(&mut substream(3, "kl-grad"), 50);
        let pts: Vec<Vec<f64>> = xs.chunks(2).map(|c| c.to_vec()).collect();
        let spec = BasisSpec::hermite_function(3);
        let c1 = MonotoneComponent::new(ExpansionFunction::zeros(spec, 1), Rectifier::Softplus).unwrap();
        let c2 = MonotoneComponent::new(ExpansionFunction::zeros(spec, 2), Rectifier::ShiftedElu).unwrap();
        for form in [LikelihoodForm::Exact, LikelihoodForm::Unhalved] {
            let obj = KlPullbackObjective::new(pts.clone(), vec![c1.clone(), c2.clone()]).unwrap().with_form(form);
            let k = obj.n_coefficients();
            let c: Vec<f64> = (0..k).map(|i| 0.3 * ((i as f64 * 1.7).sin())).collect();
            let mut g = vec![0.0; k];
            obj.gradient(&c, &mut g);
            for i in 0..k {
                let h = 1e-6;
                let (mut up, mut dn) = (c.clone(), c.clone());
                up[i] += h;
                dn[i] -= h;
                let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
                assert!((g[i] - fd).abs() <= 1e-5 * fd.abs().max(1e-2), "{form:?} i={i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn exact_map_estimate_is_zero() {
        let gumbel = Distribution1D::gumbel(0.0, 1.0).unwrap();
        let t = ExactTransport::new(&Distribution1D::StdGaussian, &gumbel, TransportDirection::Pullback);
        let xs = gumbel.sample(&mut substream(11, "kl-exact"), 100_000);
        let e = kl_estimate(&gumbel, &t, &xs).unwrap();
        assert!(e.value.abs() <= 3.0 * e.std_error.max(1e-12), "{e:?}");
    }

    #[test]
    fn shifted_gaussian_estimate() {
        let nu = Distribution1D::gaussian(1.0, 1.0).unwrap();
        let xs = nu.sample(&mut substream(12, "kl-shift"), 100_000);
        let id = FnMap { value: |x: f64| x, derivative: |_| 1.0 };
        let e = kl_estimate(&nu, &id, &xs).unwrap();
        assert!((e.value - 0.5).abs() <= 3.0 * e.std_error, "{e:?}");
        let e0 = kl_estimate(&Distribution1D::StdGaussian, &id, &Distribution1D::StdGaussian.sample(&mut substream(12, "kl-zero"), 1000)).unwrap();
        assert_eq!(e0.value, 0.0);
    }
}
