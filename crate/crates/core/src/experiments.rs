//! Convergence studies over a list of degrees, rate fits, and CSV/JSON output.
//!
//! Three studies are provided:
//!
//! - compact W₂: uniform reference on `[-1, 1]`, target `(x^{2k} sign x)_♯`
//!   uniform, Legendre maps fitted in closed form;
//! - Gumbel W_p: Gaussian reference, Gumbel target, Hermite-function maps
//!   fitted in closed form (`p = 2`), by BFGS on the smoothed objective
//!   (`p = 1`) or by BFGS on a quadrature MMD;
//! - Gumbel KL: monotone Hermite-function maps pulling the Gaussian back to
//!   Gumbel samples, fitted by BFGS on the sample likelihood.
//!
//! Degrees run concurrently. Each degree draws from its own substream, so the
//! output depends only on the config.

use std::fmt;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{project_on_nodes, BasisSpec, ExpansionFunction};
use crate::distributions::{substream, Distribution1D};
use crate::divergences::{
    empirical_wasserstein_1d, kl_estimate, l2_map_error, mmd_gaussian, reference_nodes, split_uniform_nodes,
    w2_from_objective, KlPullbackObjective, LikelihoodForm, MmdFitObjective, WpQuantileObjective, DEFAULT_SMOOTHING,
};
use crate::error::{Error, Result};
use crate::maps::{ExactTransport, FnMap, MapComponent, MonotoneComponent, Rectifier, TransportDirection};
use crate::optimize::{bfgs_minimize, BfgsOptions, OptimizerReport};
use crate::quadrature::{Interval, QuadratureRule};

pub const DEFAULT_QUAD_POINTS: usize = 10_000;
pub const DEFAULT_PAIRS: usize = 10_000;
pub const DEFAULT_TEST_SAMPLES: usize = 100_000;
pub const DEFAULT_TRAIN_SAMPLES: usize = 10_000;
/// Quadrature nodes for MMD fits, whose cost is quadratic in the node count.
pub const DEFAULT_MMD_POINTS: usize = 1_000;
/// Relative diagonal shift applied when a normal-equation solve fails.
pub const RETRY_JITTER: f64 = 1e-12;
/// Cap on the test sample used for the empirical MMD.
const EMPIRICAL_MMD_CAP: usize = 2_000;
/// Gauss–Legendre points per half-interval for compact L² errors. The targets
/// are polynomial on each half, so this is exact up to degree 511.
const SPLIT_NODES: usize = 256;
/// Gauss–Hermite points for map errors under a Gaussian reference.
const GH_NODES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    CompactW2,
    GumbelWp,
    GumbelKl,
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyKind::CompactW2 => "compact-w2",
            StudyKind::GumbelWp => "gumbel-wp",
            StudyKind::GumbelKl => "gumbel-kl",
        })
    }
}

/// Divergence minimized by a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Divergence {
    W1,
    W2,
    Kl,
    Mmd { gamma: f64 },
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::W1 => f.write_str("w1"),
            Divergence::W2 => f.write_str("w2"),
            Divergence::Kl => f.write_str("kl"),
            Divergence::Mmd { gamma } => write!(f, "mmd({gamma})"),
        }
    }
}

impl FromStr for Divergence {
    type Err = Error;

    /// `w1`, `w2`, `kl` or `mmd(<gamma>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "w1" => return Ok(Divergence::W1),
            "w2" => return Ok(Divergence::W2),
            "kl" => return Ok(Divergence::Kl),
            _ => {}
        }
        let gamma = s
            .strip_prefix("mmd(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("unknown divergence {s:?}")))?
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("mmd kernel scale: {e}")))?;
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Parse(format!("mmd kernel scale must be positive, got {gamma}")));
        }
        Ok(Divergence::Mmd { gamma })
    }
}

impl TryFrom<String> for Divergence {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Divergence> for String {
    fn from(d: Divergence) -> Self {
        d.to_string()
    }
}

/// Everything a study needs. All fields are echoed into the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub reference: Distribution1D,
    pub target: Distribution1D,
    pub divergence: Divergence,
    pub degrees: Vec<usize>,
    /// Clenshaw–Curtis nodes on `[0, 1]` for W_p objectives.
    pub quad_points: usize,
    /// Gauss–Legendre nodes on `[0, 1]` for MMD fits.
    pub mmd_points: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub monotonicity_pairs: usize,
    pub rectifier: Rectifier,
    pub likelihood: LikelihoodForm,
    /// `ε` in the `p = 1` smoothing `sqrt(u² + ε²)`.
    pub smoothing: f64,
    pub bfgs: BfgsOptions,
    pub seed: u64,
    /// Record wall-clock times. Disable for byte-identical reruns.
    pub record_timing: bool,
    pub output: Option<PathBuf>,
}

impl StudyConfig {
    fn base(kind: StudyKind, reference: Distribution1D, target: Distribution1D, divergence: Divergence) -> Self {
        Self {
            kind,
            reference,
            target,
            divergence,
            degrees: Vec::new(),
            quad_points: DEFAULT_QUAD_POINTS,
            mmd_points: DEFAULT_MMD_POINTS,
            train_samples: DEFAULT_TRAIN_SAMPLES,
            test_samples: DEFAULT_TEST_SAMPLES,
            monotonicity_pairs: DEFAULT_PAIRS,
            rectifier: Rectifier::Softplus,
            likelihood: LikelihoodForm::Exact,
            smoothing: DEFAULT_SMOOTHING,
            bfgs: BfgsOptions::default(),
            seed: 0,
            record_timing: true,
            output: None,
        }
    }

    /// Uniform reference, target `(x^{2k} sign x)_♯` uniform.
    pub fn compact_w2(k: u32) -> Result<Self> {
        let mut cfg =
            Self::base(StudyKind::CompactW2, Distribution1D::UniformSym, Distribution1D::power_pushforward(k)?, Divergence::W2);
        cfg.degrees = vec![1, 2, 4, 10, 21, 46, 100];
        Ok(cfg)
    }

    /// Gaussian reference, Gumbel(1, 2) target.
    pub fn gumbel_wp(p: u32) -> Result<Self> {
        let divergence = match p {
            1 => Divergence::W1,
            2 => Divergence::W2,
            _ => return Err(Error::InvalidArgument(format!("p must be 1 or 2, got {p}"))),
        };
        let mut cfg = Self::base(StudyKind::GumbelWp, Distribution1D::StdGaussian, Distribution1D::gumbel(1.0, 2.0)?, divergence);
        cfg.degrees = (1..=20).collect();
        Ok(cfg)
    }

    /// Gaussian reference pulled back to Gumbel(0, 1).
    pub fn gumbel_kl() -> Result<Self> {
        let mut cfg = Self::base(StudyKind::GumbelKl, Distribution1D::StdGaussian, Distribution1D::gumbel(0.0, 1.0)?, Divergence::Kl);
        cfg.degrees = (1..=10).collect();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() {
            return Err(Error::InvalidArgument("degree list is empty".into()));
        }
        if self.degrees.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!("degrees must be strictly increasing, got {:?}", self.degrees)));
        }
        for (name, v) in [
            ("quad_points", self.quad_points),
            ("mmd_points", self.mmd_points),
            ("train_samples", self.train_samples),
            ("test_samples", self.test_samples),
            ("monotonicity_pairs", self.monotonicity_pairs),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.smoothing > 0.0) || !self.smoothing.is_finite() {
            return Err(Error::InvalidArgument(format!("smoothing must be positive, got {}", self.smoothing)));
        }
        let gaussian_reference = self.reference == Distribution1D::StdGaussian;
        match self.kind {
            StudyKind::CompactW2 => {
                if self.reference != Distribution1D::UniformSym {
                    return Err(Error::InvalidArgument("compact-w2 needs the uniform reference".into()));
                }
                if self.divergence != Divergence::W2 {
                    return Err(Error::InvalidArgument(format!("compact-w2 fits w2, not {}", self.divergence)));
                }
            }
            StudyKind::GumbelWp => {
                if !gaussian_reference {
                    return Err(Error::InvalidArgument("gumbel-wp needs the Gaussian reference".into()));
                }
                if self.divergence == Divergence::Kl {
                    return Err(Error::InvalidArgument("gumbel-wp fits w1, w2 or mmd".into()));
                }
            }
            StudyKind::GumbelKl => {
                if !gaussian_reference {
                    return Err(Error::InvalidArgument("gumbel-kl needs the Gaussian reference".into()));
                }
                if self.divergence != Divergence::Kl {
                    return Err(Error::InvalidArgument(format!("gumbel-kl fits kl, not {}", self.divergence)));
                }
            }
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub divergence: f64,
    pub l2_err: f64,
    pub v_err: Option<f64>,
    pub p_mon: f64,
    pub wall_ms: u64,
    pub iters: Option<usize>,
}

impl StudyRow {
    fn failed(n: usize) -> Self {
        Self { n, divergence: f64::NAN, l2_err: f64::NAN, v_err: None, p_mon: f64::NAN, wall_ms: 0, iters: None }
    }
}

/// Per-row diagnostics for the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDetail {
    pub n: usize,
    /// Sample-based estimate of the divergence from test samples.
    pub empirical: Option<f64>,
    pub std_error: Option<f64>,
    pub condition: Option<f64>,
    /// Set when a normal-equation solve was retried with a diagonal shift.
    pub jitter: Option<f64>,
    pub optimizer: Option<OptimizerReport>,
    pub failure: Option<String>,
}

impl RowDetail {
    fn new(n: usize) -> Self {
        Self { n, empirical: None, std_error: None, condition: None, jitter: None, optimizer: None, failure: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
    pub details: Vec<RowDetail>,
}

impl StudyOutcome {
    /// Rows whose fit failed or did not converge.
    pub fn failures(&self) -> Vec<usize> {
        self.details.iter().filter(|d| d.failure.is_some()).map(|d| d.n).collect()
    }

    /// Header comment, then the fixed columns
    /// `n,divergence,l2_err,v_err,p_mon,wall_ms,iters`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "# tmap {} config={}", env!("CARGO_PKG_VERSION"), serde_json::to_string(&self.config)?)?;
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }

    /// Config, environment, per-row diagnostics and a fitted rate.
    pub fn sidecar(&self) -> serde_json::Value {
        let model = match self.config.kind {
            StudyKind::CompactW2 => RateModel::Power,
            _ => RateModel::Exponential,
        };
        let rate = fit_rate(&self.rows, model, 1..=usize::MAX).ok();
        let mut notes = Vec::new();
        if self.config.kind == StudyKind::GumbelWp {
            notes.push(format!(
                "empirical divergences use {} test samples and saturate once the fit error falls below sampling error",
                self.config.test_samples
            ));
        }
        if !self.config.record_timing {
            notes.push("timing disabled: wall_ms is 0".to_string());
        }
        serde_json::json!({
            "artifact": { "name": "tmap", "version": env!("CARGO_PKG_VERSION") },
            "config": self.config,
            "environment": {
                "os": std::env::consts::OS,
                "arch": std::env::consts::ARCH,
                "threads": rayon::current_num_threads(),
            },
            "rate": rate.map(|r| serde_json::json!({ "model": model, "fit": r })),
            "notes": notes,
            "rows": self.details,
        })
    }

    /// Writes `path` (CSV) and `path` with a `.json` extension (sidecar).
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        let sidecar = path.with_extension("json");
        std::fs::write(&sidecar, serde_json::to_string_pretty(&self.sidecar())?)?;
        Ok(sidecar)
    }
}

/// Fraction of `pairs` independent pairs `(x, x')` from `eta` with
/// `(T(x) - T(x')) (x - x') > 0`. Ties count as failures.
pub fn monotonicity_probability<R: Rng + ?Sized>(
    map: &dyn MapComponent,
    eta: &Distribution1D,
    pairs: usize,
    rng: &mut R,
) -> Result<f64> {
    if pairs == 0 {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    if map.input_dim() != 1 {
        return Err(Error::InvalidArgument("monotonicity probability takes a one-dimensional map".into()));
    }
    let xs = eta.sample(rng, pairs);
    let ys = eta.sample(rng, pairs);
    let mut hits = 0usize;
    for (&x, &y) in xs.iter().zip(&ys) {
        if (map.value(&[x])? - map.value(&[y])?) * (x - y) > 0.0 {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateModel {
    /// `value ≈ C n^slope`.
    Power,
    /// `value ≈ C e^{slope n}`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log values.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares rate of the divergence column over degrees in `window`.
pub fn fit_rate(rows: &[StudyRow], model: RateModel, window: RangeInclusive<usize>) -> Result<RateFit> {
    fit_rate_by(rows, model, window, |r| r.divergence)
}

/// [`fit_rate`] on any column.
pub fn fit_rate_by<F: Fn(&StudyRow) -> f64>(
    rows: &[StudyRow],
    model: RateModel,
    window: RangeInclusive<usize>,
    column: F,
) -> Result<RateFit> {
    let (ns, vs): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| window.contains(&r.n)).map(|r| (r.n as f64, column(r))).unzip();
    fit_rate_points(&ns, &vs, model)
}

/// Fits `log value` against `log n` or `n`, skipping non-positive and
/// non-finite values.
pub fn fit_rate_points(ns: &[f64], values: &[f64], model: RateModel) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(values)
        .filter(|(n, v)| **v > 0.0 && v.is_finite() && **n > 0.0)
        .map(|(&n, &v)| {
            let x = match model {
                RateModel::Power => n.ln(),
                RateModel::Exponential => n,
            };
            (x, v.ln())
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData { usable: pts.len(), needed: 3 });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate fit needs at least two distinct degrees".into()));
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / m).sqrt();
    Ok(RateFit { slope, intercept, residual, points: pts.len() })
}

/// Whether `values` are non-increasing, within relative slack `rel_tol`,
/// after a 3-point running median. Ends keep their own value.
pub fn decays_after_smoothing(values: &[f64], rel_tol: f64) -> bool {
    let smooth: Vec<f64> = (0..values.len())
        .map(|i| {
            if i == 0 || i + 1 == values.len() {
                return values[i];
            }
            let mut w = [values[i - 1], values[i], values[i + 1]];
            w.sort_by(f64::total_cmp);
            w[1]
        })
        .collect();
    smooth.windows(2).all(|w| w[1] <= w[0] * (1.0 + rel_tol))
}

/// Runs the study selected by `cfg.kind`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutcome> {
    match cfg.kind {
        StudyKind::CompactW2 => run_compact_convergence(cfg),
        StudyKind::GumbelWp => run_gumbel_wasserstein(cfg),
        StudyKind::GumbelKl => run_gumbel_kl(cfg),
    }
}

fn expect_kind(cfg: &StudyConfig, kind: StudyKind) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::InvalidArgument(format!("config is for {}, not {kind}", cfg.kind)));
    }
    cfg.validate()
}

/// Runs every degree concurrently; a failing degree yields a flagged row.
fn run_degrees<F>(cfg: &StudyConfig, fit: F) -> StudyOutcome
where
    F: Fn(usize, &mut RowDetail) -> Result<StudyRow> + Sync,
{
    let (rows, details) = cfg
        .degrees
        .par_iter()
        .map(|&n| {
            let start = Instant::now();
            let mut detail = RowDetail::new(n);
            let mut row = match fit(n, &mut detail) {
                Ok(row) => row,
                Err(e) => {
                    detail.failure = Some(e.to_string());
                    StudyRow::failed(n)
                }
            };
            if let Some(report) = detail.optimizer.as_ref().filter(|r| !r.converged) {
                detail.failure.get_or_insert_with(|| {
                    format!("optimizer stopped after {} iterations without converging", report.iterations)
                });
            }
            row.wall_ms = if cfg.record_timing { start.elapsed().as_millis() as u64 } else { 0 };
            (row, detail)
        })
        .unzip();
    StudyOutcome { config: cfg.clone(), rows, details }
}

fn pmon_stream(cfg: &StudyConfig, n: usize) -> crate::distributions::StreamRng {
    substream(cfg.seed, &format!("{}-pmon-n{n}", cfg.kind))
}

fn exact_pushforward(cfg: &StudyConfig) -> ExactTransport {
    ExactTransport::new(&cfg.reference, &cfg.target, TransportDirection::Pushforward)
}

/// Closed-form W₂ fit, retried once with [`RETRY_JITTER`] when the normal
/// equations are not numerically positive definite.
fn w2_fit_with_retry(obj: &WpQuantileObjective, detail: &mut RowDetail) -> Result<crate::divergences::W2Fit> {
    match w2_from_objective(obj, 0.0) {
        Err(Error::IllConditioned { .. } | Error::NotSpd { .. }) => {
            detail.jitter = Some(RETRY_JITTER);
            w2_from_objective(obj, RETRY_JITTER)
        }
        other => other,
    }
}

/// Legendre maps fitted by the closed-form W₂ solution. Records W₂ at
/// quadrature resolution, the L² error against the exact transport and the
/// monotonicity probability.
pub fn run_compact_convergence(cfg: &StudyConfig) -> Result<StudyOutcome> {
    expect_kind(cfg, StudyKind::CompactW2)?;
    let rule = QuadratureRule::clenshaw_curtis(cfg.quad_points, Interval::UNIT)?;
    let exact = exact_pushforward(cfg);
    let nodes = (&split_uniform_nodes(SPLIT_NODES)?).into();
    Ok(run_degrees(cfg, |n, detail| {
        let obj = WpQuantileObjective::new(2.0, &cfg.reference, &cfg.target, &rule, BasisSpec::legendre(n))?;
        let fit = w2_fit_with_retry(&obj, detail)?;
        detail.condition = Some(fit.condition);
        Ok(StudyRow {
            n,
            divergence: fit.distance,
            l2_err: l2_map_error(&exact, &fit.function, &nodes)?,
            v_err: None,
            p_mon: monotonicity_probability(&fit.function, &cfg.reference, cfg.monotonicity_pairs, &mut pmon_stream(cfg, n))?,
            wall_ms: 0,
            iters: None,
        })
    }))
}

/// Hermite-function maps pushing the Gaussian forward to the target.
/// `W₂` uses the closed form, `W₁` and MMD use BFGS from the L²_η
/// projection of the identity.
pub fn run_gumbel_wasserstein(cfg: &StudyConfig) -> Result<StudyOutcome> {
    expect_kind(cfg, StudyKind::GumbelWp)?;
    let rule = QuadratureRule::clenshaw_curtis(cfg.quad_points, Interval::UNIT)?;
    let exact = exact_pushforward(cfg);
    let gh = (&reference_nodes(&cfg.reference, GH_NODES)?).into();
    Ok(run_degrees(cfg, |n, detail| {
        let spec = BasisSpec::hermite_function(n);
        let mut test_rng = substream(cfg.seed, &format!("{}-test-n{n}", cfg.kind));
        let z = cfg.reference.sample(&mut test_rng, cfg.test_samples);
        let y = cfg.target.sample(&mut test_rng, cfg.test_samples);
        let (map, divergence, iters): (ExpansionFunction, f64, Option<usize>) = match cfg.divergence {
            Divergence::W2 => {
                let obj = WpQuantileObjective::new(2.0, &cfg.reference, &cfg.target, &rule, spec)?;
                let fit = w2_fit_with_retry(&obj, detail)?;
                detail.condition = Some(fit.condition);
                (fit.function, fit.distance, None)
            }
            Divergence::W1 => {
                let obj = WpQuantileObjective::new(1.0, &cfg.reference, &cfg.target, &rule, spec)?
                    .with_smoothing(cfg.smoothing);
                let x0 = project_on_nodes(|x| x, spec, &obj.reference_nodes()?)?;
                let report = bfgs_minimize(&obj, x0.function.coefficients(), &cfg.bfgs)?;
                let map = obj.expansion(report.coefficients.clone())?;
                let value = obj.distance(&map)?;
                let iters = report.iterations;
                detail.optimizer = Some(report);
                (map, value, Some(iters))
            }
            Divergence::Mmd { gamma } => {
                let gl = QuadratureRule::gauss_legendre(cfg.mmd_points, Interval::UNIT)?;
                let (rn, tn) = (cfg.reference.quantile_nodes(&gl)?, cfg.target.quantile_nodes(&gl)?);
                let obj = MmdFitObjective::new(gamma, spec, &rn, &tn)?;
                let x0 = project_on_nodes(|x| x, spec, &rn)?;
                let report = bfgs_minimize(&obj, x0.function.coefficients(), &cfg.bfgs)?;
                let value = obj.distance(&report.coefficients);
                let map = obj.expansion(report.coefficients.clone())?;
                let iters = report.iterations;
                detail.optimizer = Some(report);
                (map, value, Some(iters))
            }
            Divergence::Kl => return Err(Error::InvalidArgument("gumbel-wp does not fit kl".into())),
        };
        let pushed: Vec<f64> = z.iter().map(|&x| map.eval1(x)).collect::<Result<_>>()?;
        detail.empirical = Some(match cfg.divergence {
            Divergence::Mmd { gamma } => {
                let m = pushed.len().min(EMPIRICAL_MMD_CAP);
                mmd_gaussian(&pushed[..m], &y[..m], gamma)?
            }
            Divergence::W1 => empirical_wasserstein_1d(&pushed, &y, 1.0)?,
            _ => empirical_wasserstein_1d(&pushed, &y, 2.0)?,
        });
        Ok(StudyRow {
            n,
            divergence,
            l2_err: l2_map_error(&exact, &map, &gh)?,
            v_err: None,
            p_mon: monotonicity_probability(&map, &cfg.reference, cfg.monotonicity_pairs, &mut pmon_stream(cfg, n))?,
            wall_ms: 0,
            iters,
        })
    }))
}

/// Monotone Hermite-function maps pulling the Gaussian back to target
/// samples. The KL estimate and the map errors use an independent test
/// sample of the target; map errors are taken against the exact pullback
/// map. Monotonicity pairs are drawn from the target, the map's domain.
pub fn run_gumbel_kl(cfg: &StudyConfig) -> Result<StudyOutcome> {
    expect_kind(cfg, StudyKind::GumbelKl)?;
    let train = cfg.target.sample(&mut substream(cfg.seed, "gumbel-kl-train"), cfg.train_samples);
    let test = cfg.target.sample(&mut substream(cfg.seed, "gumbel-kl-test"), cfg.test_samples);
    let exact = ExactTransport::new(&cfg.reference, &cfg.target, TransportDirection::Pullback);
    let truth: Vec<(f64, f64)> =
        test.iter().map(|&x| Ok((exact.value(&[x])?, exact.diag_deriv(&[x])?))).collect::<Result<_>>()?;
    let gh = (&reference_nodes(&cfg.reference, 100)?).into();
    let id = FnMap { value: |x: f64| x, derivative: |_| 1.0 };
    Ok(run_degrees(cfg, |n, detail| {
        let template = MonotoneComponent::from_map(&id, BasisSpec::hermite_function(n), cfg.rectifier, &gh)?;
        let obj = KlPullbackObjective::scalar(&train, template)?.with_form(cfg.likelihood);
        let report = bfgs_minimize(&obj, &obj.initial(), &cfg.bfgs)?;
        let map = obj.components(&report.coefficients)?.remove(0);
        let iters = report.iterations;
        detail.optimizer = Some(report);
        let kl = kl_estimate(&cfg.target, &map, &test)?;
        detail.std_error = Some(kl.std_error);
        let (mut l2, mut v) = (0.0, 0.0);
        for (&x, &(t, dt)) in test.iter().zip(&truth) {
            let e = (map.value(&[x])? - t).powi(2);
            l2 += e;
            v += e + (map.diag_deriv(&[x])? - dt).powi(2);
        }
        let m = test.len() as f64;
        Ok(StudyRow {
            n,
            divergence: kl.value,
            l2_err: (l2 / m).sqrt(),
            v_err: Some((v / m).sqrt()),
            p_mon: monotonicity_probability(&map, &cfg.target, cfg.monotonicity_pairs, &mut pmon_stream(cfg, n))?,
            wall_ms: 0,
            iters: Some(iters),
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn monotonicity_examples() {
        let mut rng = substream(1, "pmon");
        let inc = FnMap { value: |x: f64| x.powi(3) + x, derivative: |x: f64| 3.0 * x * x + 1.0 };
        let dec = FnMap { value: |x: f64| -x, derivative: |_| -1.0 };
        let sq = FnMap { value: |x: f64| x * x, derivative: |x: f64| 2.0 * x };
        let u = Distribution1D::UniformSym;
        assert_eq!(monotonicity_probability(&inc, &u, 1000, &mut rng).unwrap(), 1.0);
        assert_eq!(monotonicity_probability(&dec, &u, 1000, &mut rng).unwrap(), 0.0);
        let pairs = 10_000;
        let p = monotonicity_probability(&sq, &u, pairs, &mut rng).unwrap();
        assert!((p - 0.5).abs() <= 3.0 / (2.0 * (pairs as f64).sqrt()), "{p}");
        assert!(monotonicity_probability(&sq, &u, 0, &mut rng).is_err());
    }

    #[test]
    fn square_map_grid_enumeration() {
        // (x² - y²)(x - y) = (x + y)(x - y)² > 0 iff x + y > 0 off the diagonal
        let m = 400;
        let grid: Vec<f64> = (0..m).map(|i| -1.0 + (2 * i + 1) as f64 / m as f64).collect();
        let hits = grid.iter().flat_map(|x| grid.iter().map(move |y| (x * x - y * y) * (x - y) > 0.0)).filter(|b| *b).count();
        let frac = hits as f64 / (m * m) as f64;
        assert!((frac - 0.5).abs() < 2.0 / m as f64, "{frac}");
    }

    fn rows_from(ns: &[usize], f: impl Fn(f64) -> f64) -> Vec<StudyRow> {
        ns.iter()
            .map(|&n| StudyRow {
                n,
                divergence: f(n as f64),
                l2_err: f(n as f64),
                v_err: None,
                p_mon: 1.0,
                wall_ms: 0,
                iters: None,
            })
            .collect()
    }

    #[test]
    fn rate_fit_examples() {
        let rows = rows_from(&[1, 2, 4, 10, 21, 46, 100], |n| n.powf(-2.5));
        let fit = fit_rate(&rows, RateModel::Power, 1..=100).unwrap();
        assert_abs_diff_eq!(fit.slope, -2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.residual, 0.0, epsilon = 1e-12);
        let rows = rows_from(&(1..=20).collect::<Vec<_>>(), |n| (-0.3 * n).exp());
        assert_abs_diff_eq!(fit_rate(&rows, RateModel::Exponential, 2..=20).unwrap().slope, -0.3, epsilon = 1e-12);
        assert_eq!(
            fit_rate(&rows, RateModel::Exponential, 1..=2).unwrap_err(),
            Error::InsufficientData { usable: 2, needed: 3 }
        );
    }

    #[test]
    fn table_one_rows_fit_the_reference_rate() {
        let paper = [(4, 1.86e-2), (10, 2.04e-3), (21, 2.98e-4), (46, 4.84e-5), (100, 7.05e-6)];
        let (ns, vs): (Vec<f64>, Vec<f64>) = paper.iter().map(|&(n, v)| (n as f64, v)).unzip();
        let fit = fit_rate_points(&ns, &vs, RateModel::Power).unwrap();
        assert!((-2.9..=-2.1).contains(&fit.slope), "{}", fit.slope);
    }

    #[test]
    fn smoothing_check() {
        assert!(decays_after_smoothing(&[1.0, 0.5, 0.6, 0.2, 0.1], 0.0));
        assert!(!decays_after_smoothing(&[1.0, 0.5, 0.6, 0.7, 0.8], 0.0));
    }

    #[test]
    fn divergence_strings() {
        for d in [Divergence::W1, Divergence::W2, Divergence::Kl, Divergence::Mmd { gamma: 0.5 }] {
            assert_eq!(d.to_string().parse::<Divergence>().unwrap(), d);
        }
        assert!("mmd(-1)".parse::<Divergence>().is_err());
        assert!("tv".parse::<Divergence>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = StudyConfig::compact_w2(1).unwrap();
        cfg.validate().unwrap();
        cfg.degrees = vec![4, 4];
        assert!(cfg.validate().is_err());
        let mut cfg = StudyConfig::gumbel_kl().unwrap();
        cfg.divergence = Divergence::W2;
        assert!(cfg.validate().is_err());
        assert!(StudyConfig::gumbel_wp(3).is_err());
        let json = serde_json::to_string(&StudyConfig::gumbel_wp(1).unwrap()).unwrap();
        let back: StudyConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, StudyConfig::gumbel_wp(1).unwrap());
    }

    #[test]
    fn compact_rows_match_table_entries() {
        let mut cfg = StudyConfig::compact_w2(1).unwrap();
        cfg.degrees = vec![2, 10];
        cfg.monotonicity_pairs = 2_000;
        cfg.quad_points = 1_000;
        let out = run_compact_convergence(&cfg).unwrap();
        assert!(out.failures().is_empty());
        assert!((out.rows[1].divergence / 2.04e-3 - 1.0).abs() < 0.01, "{:?}", out.rows[1]);
        assert!((out.rows[1].l2_err / 2.05e-3 - 1.0).abs() < 0.01, "{:?}", out.rows[1]);
        assert_eq!(out.rows[1].p_mon, 1.0);
    }

    #[test]
    fn csv_schema_and_reproducibility() {
        let mut cfg = StudyConfig::gumbel_wp(2).unwrap();
        cfg.degrees = vec![2, 3];
        cfg.quad_points = 500;
        cfg.test_samples = 2_000;
        cfg.monotonicity_pairs = 500;
        cfg.record_timing = false;
        let a = run_study(&cfg).unwrap().to_csv().unwrap();
        let b = run_study(&cfg).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
        let mut lines = a.lines();
        assert!(lines.next().unwrap().starts_with("# tmap "));
        assert_eq!(lines.next().unwrap(), "n,divergence,l2_err,v_err,p_mon,wall_ms,iters");
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn failed_rows_are_flagged() {
        let mut cfg = StudyConfig::compact_w2(1).unwrap();
        cfg.degrees = vec![2, 40];
        cfg.quad_points = 10;
        cfg.monotonicity_pairs = 100;
        let out = run_compact_convergence(&cfg).unwrap();
        assert_eq!(out.failures(), vec![40]);
        assert!(out.rows[1].divergence.is_nan());
        assert!(out.rows[0].divergence.is_finite());
    }
}
