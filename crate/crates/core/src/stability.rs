//! Numerical checks of the stability estimates: divergences between
//! pushforwards bounded by distances between the maps.
//!
//! Deterministic checks use quantile quadrature over the reference and a
//! relative tolerance of 1e-8. Sample-based checks use common random numbers
//! (one reference draw pushed through both maps) and a standard error from 20
//! disjoint folds; they pass when `lhs <= rhs + 3 se`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisSpec, ExpansionFunction};
use crate::distributions::{substream, Distribution1D};
use crate::divergences::{empirical_wasserstein_1d, mmd_gaussian, mmd_weighted};
use crate::error::{Error, Result};
use crate::maps::{solve_increasing, FnMap, MapComponent, MonotoneComponent, Rectifier};
use crate::quadrature::{Interval, QuadratureRule, WeightedNodes};

/// Relative tolerance of deterministic checks.
pub const DETERMINISTIC_TOL: f64 = 1e-8;
/// Folds used for sample-based standard errors.
pub const FOLDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    Wp,
    Mmd,
    Kl,
}

impl std::fmt::Display for Theorem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Theorem::Wp => "wp",
            Theorem::Mmd => "mmd",
            Theorem::Kl => "kl",
        })
    }
}

impl std::str::FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wp" => Ok(Theorem::Wp),
            "mmd" => Ok(Theorem::Mmd),
            "kl" => Ok(Theorem::Kl),
            other => Err(Error::Parse(format!("unknown stability check {other:?}"))),
        }
    }
}

/// One map pair (or one perturbation size for the KL probe).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityTrial {
    /// Divergence between the pushforwards (deterministic estimate).
    pub lhs: f64,
    /// Map-distance bound.
    pub rhs: f64,
    /// `lhs / rhs`, with `0 / 0 = 0`.
    pub ratio: f64,
    /// Sample-based divergence with common random numbers, when computed.
    pub sample_lhs: Option<f64>,
    pub std_error: Option<f64>,
    /// Fitted log-log slope, for rate-probe suites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    pub violated: bool,
}

impl StabilityTrial {
    fn new(lhs: f64, rhs: f64, sample: Option<(f64, f64)>, violated: bool) -> Self {
        Self {
            lhs,
            rhs,
            ratio: ratio(lhs, rhs),
            sample_lhs: sample.map(|s| s.0),
            std_error: sample.map(|s| s.1),
            slope: None,
            violated,
        }
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs == 0.0 {
        if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / rhs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub theorem: Theorem,
    pub parameters: BTreeMap<String, f64>,
    pub trial_count: usize,
    pub trials: Vec<StabilityTrial>,
    pub max_ratio: f64,
    /// Indices of violated trials.
    pub violations: Vec<usize>,
    /// Largest `|ratio - 1|` on sharpness suites.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sharpness_deviation: Option<f64>,
    /// Fitted log-log slope for rate probes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
}

impl StabilityReport {
    fn from_trials(theorem: Theorem, parameters: BTreeMap<String, f64>, trials: Vec<StabilityTrial>) -> Result<Self> {
        if let Some(i) = trials.iter().position(|t| !t.lhs.is_finite() || !t.rhs.is_finite()) {
            return Err(Error::NonFinite { context: "stability trial", index: i, at: i as f64, value: trials[i].lhs });
        }
        let max_ratio = trials.iter().map(|t| t.ratio).fold(0.0, f64::max);
        let violations = trials.iter().enumerate().filter(|(_, t)| t.violated).map(|(i, _)| i).collect();
        Ok(Self {
            theorem,
            parameters,
            trial_count: trials.len(),
            trials,
            max_ratio,
            violations,
            sharpness_deviation: None,
            slope: None,
        })
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Per-trial CSV: `trial,lhs,rhs,ratio,sample_lhs,std_error,slope,violated`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,lhs,rhs,ratio,sample_lhs,std_error,slope,violated\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for (i, t) in self.trials.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{:e},{:e},{:e},{},{},{},{}",
                t.lhs,
                t.rhs,
                t.ratio,
                opt(t.sample_lhs),
                opt(t.std_error),
                opt(t.slope),
                t.violated
            );
        }
        out
    }
}

/// How the W_p divergence between pushforwards is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WpMode {
    /// Quantile composition; both maps must be increasing.
    Monotone,
    /// Sorted-sample coupling on pushforward draws.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSettings {
    /// Gauss–Legendre nodes in probability space for reference expectations.
    pub quad_points: usize,
    /// Draws for sample-based estimates.
    pub samples: usize,
    pub seed: u64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self { quad_points: 200, samples: 100_000, seed: 0 }
    }
}

/// Reference expectation nodes: Gauss–Legendre in `y` pushed through the
/// quantile function (uniform: directly on `[-1, 1]`).
fn expectation_nodes(mu: &Distribution1D, n: usize) -> Result<WeightedNodes> {
    mu.quantile_nodes(&QuadratureRule::gauss_legendre(n, Interval::UNIT)?)
}

fn map_values(map: &dyn MapComponent, xs: &[f64]) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            let v = map.value(&[x])?;
            if !v.is_finite() {
                return Err(Error::NonFinite { context: "map value", index: 0, at: x, value: v });
            }
            Ok(v)
        })
        .collect()
}

/// `‖F - G‖_{L^q_μ}` by quadrature.
fn lq_distance(fv: &[f64], gv: &[f64], w: &[f64], q: f64) -> f64 {
    fv.iter().zip(gv).zip(w).map(|((a, b), w)| w * (a - b).abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

fn fold_error(values: &[f64], estimate: &dyn Fn(&[f64], &[f64]) -> Result<f64>, other: &[f64]) -> Result<f64> {
    let n = values.len() / FOLDS;
    if n == 0 {
        return Err(Error::InsufficientData { usable: values.len(), needed: FOLDS });
    }
    let folds: Vec<f64> = (0..FOLDS)
        .map(|k| estimate(&values[k * n..(k + 1) * n], &other[k * n..(k + 1) * n]))
        .collect::<Result<_>>()?;
    let mean = folds.iter().sum::<f64>() / FOLDS as f64;
    let var = folds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (FOLDS - 1) as f64;
    // standard error of the full-sample estimate from fold variability
    Ok((var / FOLDS as f64).sqrt())
}

/// `W_p(F♯μ, G♯μ) <= ‖F - G‖_{L^q_μ}` for `q >= p`.
pub fn check_wp_stability(
    f: &dyn MapComponent,
    g: &dyn MapComponent,
    mu: &Distribution1D,
    p: f64,
    q: f64,
    mode: WpMode,
    settings: &CheckSettings,
) -> Result<StabilityTrial> {
    if !(p >= 1.0 && q >= p) {
        return Err(Error::InvalidArgument(format!("need 1 <= p <= q, got p={p}, q={q}")));
    }
    let nodes = expectation_nodes(mu, settings.quad_points)?;
    let (fv, gv) = (map_values(f, nodes.points())?, map_values(g, nodes.points())?);
    let rhs = lq_distance(&fv, &gv, nodes.weights(), q);
    match mode {
        WpMode::Monotone => {
            for m in [f, g] {
                for &x in nodes.points() {
                    let d = m.diag_deriv(&[x])?;
                    if !(d > 0.0) {
                        return Err(Error::NotMonotone { at: x, derivative: d });
                    }
                }
            }
            // F∘F_μ⁻¹ is the quantile function of F♯μ for increasing F.
            let lhs = lq_distance(&fv, &gv, nodes.weights(), p);
            Ok(StabilityTrial::new(lhs, rhs, None, lhs > rhs * (1.0 + DETERMINISTIC_TOL)))
        }
        WpMode::Empirical => {
            let mut rng = substream(settings.seed, "wp-empirical");
            let xs = mu.sample(&mut rng, settings.samples);
            let (fs, gs) = (map_values(f, &xs)?, map_values(g, &xs)?);
            let lhs = empirical_wasserstein_1d(&fs, &gs, p)?;
            let se = fold_error(&fs, &|a, b| empirical_wasserstein_1d(a, b, p), &gs)?;
            let violated = lhs > rhs + 3.0 * se;
            Ok(StabilityTrial { sample_lhs: Some(lhs), std_error: Some(se), ..StabilityTrial::new(lhs, rhs, None, violated) })
        }
    }
}

/// Largest sample for the MMD sample check; the V-statistic costs `O(N²)`.
pub const MMD_SAMPLE_CAP: usize = 4_000;

/// `MMD_κ(F♯μ, G♯μ) <= sqrt(2) γ ‖F - G‖_{L¹_μ}` for the Gaussian kernel
/// `exp(-γ²|u - v|²)`. The deterministic side is the MMD between the two
/// pushforwards of the quadrature measure; `settings.samples > 0` adds a
/// sample check on at most [`MMD_SAMPLE_CAP`] draws.
pub fn check_mmd_stability(
    f: &dyn MapComponent,
    g: &dyn MapComponent,
    mu: &Distribution1D,
    gamma: f64,
    settings: &CheckSettings,
) -> Result<StabilityTrial> {
    let nodes = expectation_nodes(mu, settings.quad_points)?;
    let (fv, gv) = (map_values(f, nodes.points())?, map_values(g, nodes.points())?);
    let w = nodes.weights();
    let rhs = std::f64::consts::SQRT_2 * gamma * lq_distance(&fv, &gv, w, 1.0);
    let lhs = mmd_weighted(&fv, w, &gv, w, gamma)?;
    let mut violated = lhs > rhs * (1.0 + DETERMINISTIC_TOL) + 1e-7 * gamma;
    let mut sample = None;
    if settings.samples > 0 {
        let mut rng = substream(settings.seed, "mmd-sample");
        let xs = mu.sample(&mut rng, settings.samples.min(MMD_SAMPLE_CAP));
        let (fs, gs) = (map_values(f, &xs)?, map_values(g, &xs)?);
        let s = mmd_gaussian(&fs, &gs, gamma)?;
        let se = fold_error(&fs, &|a, b| mmd_gaussian(a, b, gamma), &gs)?;
        violated |= s > rhs + 3.0 * se;
        sample = Some((s, se));
    }
    Ok(StabilityTrial::new(lhs, rhs, sample, violated))
}

/// Basis used for random maps on a reference: Legendre on the uniform,
/// Hermite functions otherwise.
pub fn random_map_spec(mu: &Distribution1D, degree: usize) -> BasisSpec {
    match mu {
        Distribution1D::UniformSym => BasisSpec::legendre(degree),
        _ => BasisSpec::hermite_function(degree),
    }
}

/// Expansion with coefficients drawn uniformly from `[-1, 1]`.
pub fn random_expansion<R: Rng + ?Sized>(rng: &mut R, spec: BasisSpec) -> ExpansionFunction {
    let c = (0..spec.dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    ExpansionFunction::new(spec, c).expect("sized by spec")
}

/// Monotone component with a random expansion.
pub fn random_monotone<R: Rng + ?Sized>(rng: &mut R, spec: BasisSpec, rectifier: Rectifier) -> MonotoneComponent {
    MonotoneComponent::new(random_expansion(rng, spec), rectifier).expect("default order is valid")
}

/// Degree of random maps in the suites.
pub const RANDOM_DEGREE: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSettings {
    pub trials: usize,
    pub reference: Distribution1D,
    pub check: CheckSettings,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        Self { trials: 100, reference: Distribution1D::UniformSym, check: CheckSettings::default() }
    }
}

fn trial_settings(base: &CheckSettings, label: &str, i: usize) -> CheckSettings {
    let mut rng = substream(base.seed, &format!("{label}-trial-{i}"));
    CheckSettings { seed: rng.random(), ..base.clone() }
}

/// W_p bound on random pairs. `Monotone` draws monotone pairs and records the
/// sharpness deviation at `q == p`; `Empirical` draws plain polynomial pairs.
pub fn wp_stability_suite(p: f64, q: f64, mode: WpMode, settings: &SuiteSettings) -> Result<StabilityReport> {
    let label = format!("wp-{p}-{q}-{mode:?}");
    let spec = random_map_spec(&settings.reference, RANDOM_DEGREE);
    let trials: Vec<StabilityTrial> = (0..settings.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(settings.check.seed, &format!("{label}-maps-{i}"));
            let check = trial_settings(&settings.check, &label, i);
            match mode {
                WpMode::Monotone => {
                    let f = random_monotone(&mut rng, spec, Rectifier::Softplus);
                    let g = random_monotone(&mut rng, spec, Rectifier::Softplus);
                    check_wp_stability(&f, &g, &settings.reference, p, q, mode, &check)
                }
                WpMode::Empirical => {
                    let f = random_expansion(&mut rng, spec);
                    let g = random_expansion(&mut rng, spec);
                    check_wp_stability(&f, &g, &settings.reference, p, q, mode, &check)
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut params = BTreeMap::from([("p".to_string(), p), ("q".to_string(), q)]);
    params.insert("monotone".into(), if mode == WpMode::Monotone { 1.0 } else { 0.0 });
    let mut report = StabilityReport::from_trials(Theorem::Wp, params, trials)?;
    if mode == WpMode::Monotone && p == q {
        report.sharpness_deviation =
            Some(report.trials.iter().map(|t| if t.rhs == 0.0 { 0.0 } else { (t.ratio - 1.0).abs() }).fold(0.0, f64::max));
    }
    Ok(report)
}

/// MMD bound on random plain polynomial pairs.
pub fn mmd_stability_suite(gamma: f64, settings: &SuiteSettings) -> Result<StabilityReport> {
    let label = format!("mmd-{gamma}");
    let spec = random_map_spec(&settings.reference, RANDOM_DEGREE);
    let trials: Vec<StabilityTrial> = (0..settings.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(settings.check.seed, &format!("{label}-maps-{i}"));
            let f = random_expansion(&mut rng, spec);
            let g = random_expansion(&mut rng, spec);
            check_mmd_stability(&f, &g, &settings.reference, gamma, &trial_settings(&settings.check, &label, i))
        })
        .collect::<Result<_>>()?;
    StabilityReport::from_trials(Theorem::Mmd, BTreeMap::from([("gamma".to_string(), gamma)]), trials)
}

/// Perturbation sizes `t` spanning `[1e-3, 1e-2]` logarithmically.
pub fn default_t_grid() -> Vec<f64> {
    (0..=8).map(|k| 10f64.powf(-3.0 + k as f64 / 8.0)).collect()
}

/// Tail cut for [`pullback_nodes`], in reference standard deviations.
pub const PULLBACK_Z_MAX: f64 = 12.0;

/// Gauss–Legendre points per panel in [`pullback_nodes`].
const PANEL_POINTS: usize = 16;

/// The pullback `F^♯η` of a standard Gaussian as weighted nodes in `x`:
/// composite Gauss–Legendre on `[F⁻¹(-z), F⁻¹(z)]` with weights
/// `φ(F(x)) F'(x)`. Integrating in `x` rather than `z = F(x)` keeps the
/// integrand smooth where `F` is nearly flat.
pub fn pullback_nodes(f: &dyn MapComponent, panels: usize) -> Result<WeightedNodes> {
    if panels == 0 {
        return Err(Error::InvalidArgument("need at least one panel".into()));
    }
    let value = |s: f64| f.value(&[s]);
    let deriv = |s: f64| f.diag_deriv(&[s]);
    let lo = solve_increasing(&value, &deriv, -PULLBACK_Z_MAX)?;
    let hi = solve_increasing(&value, &deriv, PULLBACK_Z_MAX)?;
    let base = QuadratureRule::gauss_legendre(PANEL_POINTS, Interval::UNIT)?;
    let width = (hi - lo) / panels as f64;
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let mut points = Vec::with_capacity(panels * PANEL_POINTS);
    let mut weights = Vec::with_capacity(panels * PANEL_POINTS);
    for k in 0..panels {
        let a = lo + k as f64 * width;
        for (&u, &w) in base.nodes().iter().zip(base.weights()) {
            let x = a + u * width;
            let z = f.value(&[x])?;
            points.push(x);
            weights.push(w * width * (-0.5 * z * z).exp() / norm * f.diag_deriv(&[x])?);
        }
    }
    WeightedNodes::new(points, weights)
}

/// `KL(F^♯η ‖ G_t^♯η)` for `G_t = F + tΔ` and a standard Gaussian `η`:
/// `E[t Δ (F + t Δ/2) - log(1 + t Δ'/F')]` under `F^♯η`, given as nodes
/// from [`pullback_nodes`].
pub fn pullback_kl_along(
    f: &dyn MapComponent,
    delta: &dyn MapComponent,
    t: f64,
    nodes: &WeightedNodes,
) -> Result<f64> {
    let mut acc = 0.0;
    for (&x, &w) in nodes.points().iter().zip(nodes.weights()) {
        let z = f.value(&[x])?;
        let (d, dd, fd) = (delta.value(&[x])?, delta.diag_deriv(&[x])?, f.diag_deriv(&[x])?);
        let rel = t * dd / fd;
        if !(rel > -1.0) {
            return Err(Error::NotMonotone { at: x, derivative: fd + t * dd });
        }
        let term = t * d * (z + 0.5 * t * d) - rel.ln_1p();
        if !term.is_finite() {
            return Err(Error::Divergence(format!("KL integrand not finite at x={x}")));
        }
        acc += w * term;
    }
    Ok(acc)
}

/// Least-squares slope and intercept of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData { usable: pts.len(), needed: 2 });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Minimum acceptable local slope of KL against map distance.
pub const KL_MIN_SLOPE: f64 = 0.95;

/// KL along `F + tΔ` against the distance `t ‖Δ‖_V` for each `t` in the
/// grid, with the fitted log-log slope. A trial is violated when the
/// perturbed map is not monotone; the report fails when the slope is below
/// [`KL_MIN_SLOPE`].
pub fn kl_rate_probe(
    f: &dyn MapComponent,
    delta: &dyn MapComponent,
    delta_v_norm: f64,
    t_grid: &[f64],
    panels: usize,
) -> Result<StabilityReport> {
    let nodes = pullback_nodes(f, panels)?;
    let mut trials = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let kl = pullback_kl_along(f, delta, t, &nodes)?;
        trials.push(StabilityTrial::new(kl, t * delta_v_norm, None, false));
    }
    let dist: Vec<f64> = trials.iter().map(|t| t.rhs).collect();
    let kls: Vec<f64> = trials.iter().map(|t| t.lhs).collect();
    let (slope, _) = loglog_slope(&dist, &kls)?;
    let mut report = StabilityReport::from_trials(
        Theorem::Kl,
        BTreeMap::from([("delta_v_norm".to_string(), delta_v_norm), ("panels".to_string(), panels as f64)]),
        trials,
    )?;
    report.slope = Some(slope);
    if !(slope >= KL_MIN_SLOPE) {
        report.violations = (0..report.trials.len()).collect();
    }
    Ok(report)
}

/// Panels used by the KL probes.
pub const KL_PANELS: usize = 200;

/// Gaussian shift case: `F` the identity, `Δ ≡ 1`, so the KL is `t²/2`.
pub fn kl_probe_gaussian_shift(t_grid: &[f64]) -> Result<StabilityReport> {
    let id = FnMap { value: |x: f64| x, derivative: |_| 1.0 };
    let one = FnMap { value: |_: f64| 1.0, derivative: |_| 0.0 };
    // ‖1‖_V under N(0, 1) is 1
    kl_rate_probe(&id, &one, 1.0, t_grid, KL_PANELS)
}

/// Random monotone Hermite-function `F` and a perturbation with unit V-norm.
pub fn kl_probe_random(seed: u64, trial: usize, t_grid: &[f64]) -> Result<StabilityReport> {
    kl_probe_labelled(seed, &format!("kl-probe-{trial}"), t_grid)
}

/// Attempts per trial before a suite gives up on drawing a pair for which
/// every `F + tΔ` stays monotone.
const KL_PROBE_ATTEMPTS: usize = 10;

/// Random KL probes, one trial each: `lhs` and `rhs` at the largest `t`,
/// the trial's fitted slope, and a violation when the slope falls below
/// [`KL_MIN_SLOPE`]. Draws for which some `F + tΔ` is not monotone are
/// rejected and redrawn. The report slope is the smallest trial slope.
pub fn kl_probe_suite(trials: usize, seed: u64, t_grid: &[f64]) -> Result<StabilityReport> {
    let rows: Vec<StabilityTrial> = (0..trials)
        .into_par_iter()
        .map(|i| {
            for attempt in 0..KL_PROBE_ATTEMPTS {
                let label = if attempt == 0 { format!("kl-probe-{i}") } else { format!("kl-probe-{i}-{attempt}") };
                match kl_probe_labelled(seed, &label, t_grid) {
                    Ok(r) => {
                        let last = r.trials.last().copied().ok_or(Error::InsufficientData { usable: 0, needed: 2 })?;
                        let mut t = StabilityTrial::new(last.lhs, last.rhs, None, !r.passed());
                        t.slope = r.slope;
                        return Ok(t);
                    }
                    Err(Error::NotMonotone { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::InvalidArgument(format!("no monotone perturbation found for trial {i}")))
        })
        .collect::<Result<_>>()?;
    let mut report = StabilityReport::from_trials(
        Theorem::Kl,
        BTreeMap::from([("min_slope".to_string(), KL_MIN_SLOPE), ("panels".to_string(), KL_PANELS as f64)]),
        rows,
    )?;
    report.slope = report.trials.iter().filter_map(|t| t.slope).reduce(f64::min);
    Ok(report)
}

fn kl_probe_labelled(seed: u64, label: &str, t_grid: &[f64]) -> Result<StabilityReport> {
    let mut rng = substream(seed, label);
    let spec = BasisSpec::new(BasisFamily::HermiteFunction, RANDOM_DEGREE);
    let f = random_monotone(&mut rng, spec, Rectifier::Softplus);
    let raw = random_expansion(&mut rng, spec);
    let gh = WeightedNodes::gauss_hermite(100)?;
    let zero = ExpansionFunction::zeros(spec, 1);
    let norm = crate::divergences::v_norm_distance(&raw, &zero, &(&gh).into())?;
    let delta = raw.with_coefficients(raw.coefficients().iter().map(|c| c / norm).collect())?;
    kl_rate_probe(&f, &delta, 1.0, t_grid, KL_PANELS)
}
