//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs the full-size studies, so build with optimizations.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use tmap::basis::{project_on_nodes, BasisSpec, ExpansionFunction};
use tmap::distributions::{substream, Distribution1D};
use tmap::divergences::{
    reference_nodes, v_norm_distance, w2_from_objective, KlPullbackObjective, WpQuantileObjective,
};
use tmap::experiments::{fit_rate, fit_rate_by, run_study, RateModel, StudyConfig, StudyOutcome, StudyRow};
use tmap::maps::{Component, MonotoneComponent, Rectifier, TriangularMap};
use tmap::optimize::{bfgs_minimize, BfgsOptions, Objective};
use tmap::quadrature::{Interval, ProductNodes, QuadratureRule, WeightedNodes};
use tmap::stability::{
    default_t_grid, kl_probe_gaussian_shift, kl_probe_suite, mmd_stability_suite, wp_stability_suite, SuiteSettings,
    WpMode,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn study(cfg: StudyConfig) -> Result<StudyOutcome, String> {
    let out = run_study(&cfg).map_err(|e| e.to_string())?;
    ensure(out.failures().is_empty(), format!("failed degrees {:?}", out.failures()))?;
    Ok(out)
}

fn row(out: &StudyOutcome, n: usize) -> Result<&StudyRow, String> {
    out.rows.iter().find(|r| r.n == n).ok_or(format!("no row for n = {n}"))
}

fn within(value: f64, reference: f64, rel: f64) -> bool {
    (value / reference - 1.0).abs() <= rel
}

fn in_range(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

const K1_REFERENCE: [(usize, f64); 5] = [(4, 1.86e-2), (10, 2.04e-3), (21, 2.98e-4), (46, 4.84e-5), (100, 7.05e-6)];
const K3_REFERENCE: [(usize, f64); 3] = [(4, 5.20e-2), (10, 5.80e-5), (21, 2.83e-7)];

fn compact_k1() -> Check {
    let out = study(StudyConfig::compact_w2(1).map_err(|e| e.to_string())?)?;
    let mut worst: f64 = 0.0;
    for (n, reference) in K1_REFERENCE {
        let v = row(&out, n)?.divergence;
        ensure(within(v, reference, 0.25), format!("n={n}: W2 {v:.3e} vs {reference:.3e}"))?;
        worst = worst.max((v / reference - 1.0).abs());
    }
    let fit = fit_rate(&out.rows, RateModel::Power, 4..=usize::MAX).map_err(|e| e.to_string())?;
    ensure(in_range(fit.slope, -2.9, -2.1), format!("power slope {:.3}", fit.slope))?;
    Ok(format!("max deviation {:.1}%, power slope {:.3}", 100.0 * worst, fit.slope))
}

fn compact_k3() -> Check {
    let out = study(StudyConfig::compact_w2(3).map_err(|e| e.to_string())?)?;
    for (n, reference) in K3_REFERENCE {
        let v = row(&out, n)?.divergence;
        ensure(within(v, reference, 0.5), format!("n={n}: W2 {v:.3e} vs {reference:.3e}"))?;
    }
    for n in [46, 100] {
        let v = row(&out, n)?.divergence;
        ensure(v <= 1e-8, format!("n={n}: W2 {v:.3e} above 1e-8"))?;
    }
    let fit = fit_rate(&out.rows, RateModel::Power, 10..=46).map_err(|e| e.to_string())?;
    ensure(in_range(fit.slope, -7.5, -5.5), format!("power slope {:.3} over [10, 46]", fit.slope))?;
    let p4 = row(&out, 4)?.p_mon;
    ensure(in_range(p4, 0.70, 0.85), format!("P[Mon] at n=4 is {p4:.4}"))?;
    for r in out.rows.iter().filter(|r| r.n != 4) {
        ensure((r.p_mon - 1.0).abs() <= 0.01, format!("P[Mon] at n={} is {:.4}", r.n, r.p_mon))?;
    }
    Ok(format!("slope {:.3} over [10, 46], P[Mon](4) = {p4:.4}", fit.slope))
}

fn gumbel_wasserstein() -> Check {
    let mut notes = Vec::new();
    for (p, lo, hi) in [(2, -0.45, -0.15), (1, -0.65, -0.35)] {
        let out = study(StudyConfig::gumbel_wp(p).map_err(|e| e.to_string())?)?;
        let fit = fit_rate(&out.rows, RateModel::Exponential, 2..=20).map_err(|e| e.to_string())?;
        ensure(in_range(fit.slope, lo, hi), format!("W{p} semilog slope {:.3}", fit.slope))?;
        let min_mon = out.rows.iter().filter(|r| r.n >= 3).map(|r| r.p_mon).fold(1.0, f64::min);
        ensure(min_mon >= 0.97, format!("W{p}: min P[Mon] over n >= 3 is {min_mon:.4}"))?;
        notes.push(format!("W{p} slope {:.3}, min P[Mon] {min_mon:.4}", fit.slope));
    }
    Ok(notes.join("; "))
}

fn gumbel_kl() -> Check {
    let out = study(StudyConfig::gumbel_kl().map_err(|e| e.to_string())?)?;
    ensure(out.rows.iter().all(|r| r.divergence > 0.0), "non-positive KL estimate")?;
    let kl = fit_rate(&out.rows, RateModel::Exponential, 1..=10).map_err(|e| e.to_string())?;
    ensure(in_range(kl.slope, -0.35, -0.10), format!("KL semilog slope {:.3}", kl.slope))?;
    let l2 = fit_rate_by(&out.rows, RateModel::Exponential, 1..=10, |r| r.l2_err).map_err(|e| e.to_string())?;
    ensure(in_range(l2.slope, -0.20, -0.05), format!("L2 semilog slope {:.3}", l2.slope))?;
    ensure(out.rows.iter().all(|r| r.p_mon == 1.0), "a fitted map failed the monotonicity check")?;
    Ok(format!("KL slope {:.3}, L2 slope {:.3}, P[Mon] 1 at every degree", kl.slope, l2.slope))
}

fn stability_suites() -> Check {
    let settings = SuiteSettings::default();
    let mut notes = Vec::new();
    for (p, q) in [(1.0, 1.0), (1.0, 2.0), (2.0, 2.0)] {
        for mode in [WpMode::Empirical, WpMode::Monotone] {
            let r = wp_stability_suite(p, q, mode, &settings).map_err(|e| e.to_string())?;
            ensure(r.violations.is_empty(), format!("W_p ({p},{q}) {mode:?}: violations {:?}", r.violations))?;
            if let Some(dev) = r.sharpness_deviation {
                ensure(dev <= 1e-8, format!("W_p ({p},{q}) sharpness deviation {dev:e}"))?;
            }
        }
    }
    notes.push("W_p 0 violations, sharpness within 1e-8".to_string());
    for gamma in [0.5, 1.0, 2.0] {
        let r = mmd_stability_suite(gamma, &settings).map_err(|e| e.to_string())?;
        ensure(r.violations.is_empty(), format!("MMD gamma={gamma}: violations {:?}", r.violations))?;
    }
    notes.push("MMD 0 violations".to_string());
    let grid = default_t_grid();
    let shift = kl_probe_gaussian_shift(&grid).map_err(|e| e.to_string())?;
    let slope = shift.slope.ok_or("no slope")?;
    ensure(slope >= 0.95 && in_range(slope, 1.8, 2.2), format!("Gaussian-shift KL slope {slope:.3}"))?;
    let random = kl_probe_suite(20, 0, &grid).map_err(|e| e.to_string())?;
    ensure(random.violations.is_empty(), format!("random KL probes failed: {:?}", random.violations))?;
    notes.push(format!("KL shift slope {slope:.3}, random probes min slope {:.3}", random.slope.unwrap_or(f64::NAN)));
    Ok(notes.join("; "))
}

fn bfgs_matches_closed_form(obj: &WpQuantileObjective, x0: &[f64]) -> Result<f64, String> {
    let closed = w2_from_objective(obj, 0.0).map_err(|e| e.to_string())?;
    let opts = BfgsOptions { tol: 1e-12, max_iter: 2000, ..BfgsOptions::default() };
    let rep = bfgs_minimize(obj, x0, &opts).map_err(|e| e.to_string())?;
    let b = closed.function.coefficients();
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = rep.coefficients.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale;
    ensure(err <= 1e-6, format!("relative coefficient error {err:e}"))?;
    Ok(err)
}

fn oracle_equivalence() -> Check {
    let rule = QuadratureRule::clenshaw_curtis(10_000, Interval::UNIT).map_err(|e| e.to_string())?;
    let nu1 = Distribution1D::power_pushforward(1).map_err(|e| e.to_string())?;
    let legendre = BasisSpec::legendre(10);
    let obj = WpQuantileObjective::new(2.0, &Distribution1D::UniformSym, &nu1, &rule, legendre).map_err(|e| e.to_string())?;
    let mut identity = vec![0.0; legendre.dim()];
    identity[1] = 1.0;
    let e1 = bfgs_matches_closed_form(&obj, &identity)?;

    let gumbel = Distribution1D::gumbel(1.0, 2.0).map_err(|e| e.to_string())?;
    let hermite = BasisSpec::hermite_function(10);
    let obj = WpQuantileObjective::new(2.0, &Distribution1D::StdGaussian, &gumbel, &rule, hermite).map_err(|e| e.to_string())?;
    let gh = WeightedNodes::gauss_hermite(200).map_err(|e| e.to_string())?;
    let x0 = project_on_nodes(|x| x, hermite, &gh).map_err(|e| e.to_string())?.function.coefficients().to_vec();
    let e2 = bfgs_matches_closed_form(&obj, &x0)?;
    Ok(format!("relative coefficient errors {e1:.1e} (uniform), {e2:.1e} (Gaussian)"))
}

fn random_hermite(seed: u64, label: &str, degree: usize) -> ExpansionFunction {
    let spec = BasisSpec::hermite_function(degree);
    let mut rng = substream(seed, label);
    ExpansionFunction::new(spec, (0..spec.dim()).map(|_| rng.random_range(-1.0..=1.0)).collect()).expect("sized by spec")
}

fn property_checks() -> Check {
    let err = |e: tmap::Error| e.to_string();
    // quadrature exactness
    for n in [2, 5, 17, 64, 129] {
        for (kind, degree) in [("cc", n - 1), ("gl", 2 * n - 1)] {
            let iv = Interval::new(0.5, 2.0).map_err(err)?;
            let rule = if kind == "cc" { QuadratureRule::clenshaw_curtis(n, iv) } else { QuadratureRule::gauss_legendre(n, iv) }
                .map_err(err)?;
            for m in [0, degree / 2, degree] {
                let m = m as i32;
                let exact = (2f64.powi(m + 1) - 0.5f64.powi(m + 1)) / (m + 1) as f64;
                let got = rule.integrate(|x| x.powi(m)).map_err(err)?;
                ensure((got - exact).abs() <= 1e-10 * exact, format!("{kind}{n} on x^{m}: {got} vs {exact}"))?;
            }
        }
    }
    // Legendre Gram diagonal
    let spec = BasisSpec::legendre(30);
    let nodes = reference_nodes(&Distribution1D::UniformSym, 120).map_err(err)?;
    let mut row = vec![0.0; spec.dim()];
    let mut gram = vec![vec![0.0; spec.dim()]; spec.dim()];
    for (&x, &w) in nodes.points().iter().zip(nodes.weights()) {
        spec.eval_all(x, &mut row).map_err(err)?;
        for i in 0..spec.dim() {
            for j in 0..spec.dim() {
                gram[i][j] += w * row[i] * row[j];
            }
        }
    }
    for (i, gi) in gram.iter().enumerate() {
        for (j, g) in gi.iter().enumerate() {
            let want = if i == j { 1.0 / (2 * i + 1) as f64 } else { 0.0 };
            ensure((g - want).abs() <= 1e-10, format!("Gram[{i}][{j}] = {g}"))?;
        }
    }
    // rectifier round trips
    for r in [Rectifier::Softplus, Rectifier::ShiftedElu] {
        for k in 0..=600 {
            let z = -30.0 + 0.1 * k as f64;
            let back = r.inverse(r.apply(z)).map_err(err)?;
            ensure((back - z).abs() <= 1e-12 * z.abs().max(1.0), format!("{r:?} round trip at {z}: {back}"))?;
        }
    }
    // R∘R⁻¹ identity in V-norm and pullback normalization
    let gh = ProductNodes::from(&WeightedNodes::gauss_hermite(60).map_err(err)?);
    let mut worst_rr: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    for trial in 0..20 {
        let r = if trial % 2 == 0 { Rectifier::Softplus } else { Rectifier::ShiftedElu };
        let c = MonotoneComponent::new(random_hermite(7, &format!("prop-{trial}"), 6), r).map_err(err)?;
        let back = MonotoneComponent::from_map(&c, BasisSpec::hermite_function(6), r, &gh).map_err(err)?;
        worst_rr = worst_rr.max(v_norm_distance(&c, &back, &gh).map_err(err)?);
        let (lo, hi) = (c.inverse(&[], -9.0).map_err(err)?, c.inverse(&[], 9.0).map_err(err)?);
        let map = TriangularMap::new(vec![Component::Monotone(c)]).map_err(err)?;
        let h = (hi - lo) / 512.0;
        let mut mass = 0.0;
        for k in 0..512 {
            let a = lo + k as f64 * h;
            let rule = QuadratureRule::gauss_legendre(20, Interval::new(a, a + h).map_err(err)?).map_err(err)?;
            for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
                mass += w * map.pullback_logdensity(&Distribution1D::StdGaussian, &[x]).map_err(err)?.exp();
            }
        }
        worst_mass = worst_mass.max((mass - 1.0).abs());
    }
    ensure(worst_rr <= 1e-6, format!("R∘R⁻¹ V-norm error {worst_rr:e}"))?;
    ensure(worst_mass <= 1e-6, format!("pullback mass error {worst_mass:e}"))?;
    // analytic vs finite-difference gradients
    let fd_error = |obj: &dyn Objective, c: &[f64]| -> f64 {
        let mut g = vec![0.0; c.len()];
        obj.gradient(c, &mut g);
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
        (0..c.len())
            .map(|i| {
                let (mut up, mut dn) = (c.to_vec(), c.to_vec());
                up[i] += 1e-6;
                dn[i] -= 1e-6;
                ((obj.value(&up) - obj.value(&dn)) / 2e-6 - g[i]).abs() / scale
            })
            .fold(0.0, f64::max)
    };
    let cc = QuadratureRule::clenshaw_curtis(200, Interval::UNIT).map_err(err)?;
    let gumbel = Distribution1D::gumbel(1.0, 2.0).map_err(err)?;
    let hermite = BasisSpec::hermite_function(6);
    let wp = WpQuantileObjective::new(2.0, &Distribution1D::StdGaussian, &gumbel, &cc, hermite).map_err(err)?;
    let xs = Distribution1D::gumbel(0.0, 1.0).map_err(err)?.sample(&mut substream(5, "prop-kl"), 200);
    let template = MonotoneComponent::new(ExpansionFunction::zeros(hermite, 1), Rectifier::Softplus).map_err(err)?;
    let kl = KlPullbackObjective::scalar(&xs, template).map_err(err)?;
    let mut worst_grad: f64 = 0.0;
    for trial in 0..50 {
        let c = random_hermite(9, &format!("grad-{trial}"), 6).coefficients().to_vec();
        worst_grad = worst_grad.max(fd_error(&wp, &c)).max(fd_error(&kl, &c));
    }
    ensure(worst_grad <= 1e-5, format!("gradient relative error {worst_grad:e}"))?;
    // bit-for-bit reproducibility
    let mut cfg = StudyConfig::gumbel_kl().map_err(err)?;
    cfg.degrees = vec![1, 2];
    cfg.train_samples = 500;
    cfg.test_samples = 1_000;
    cfg.monotonicity_pairs = 500;
    cfg.record_timing = false;
    let a = run_study(&cfg).map_err(err)?.to_csv().map_err(err)?;
    let b = run_study(&cfg).map_err(err)?.to_csv().map_err(err)?;
    ensure(a == b, "study CSV differs between identical runs")?;
    Ok(format!("R∘R⁻¹ {worst_rr:.1e}, mass {worst_mass:.1e}, gradients {worst_grad:.1e}, CSV identical"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 7] = [
        ("compact k=1 W2 values and rate", compact_k1),
        ("compact k=3 W2 values, floor, rate and monotonicity", compact_k3),
        ("Gumbel W2/W1 rates and monotonicity", gumbel_wasserstein),
        ("Gumbel KL rates and monotonicity", gumbel_kl),
        ("stability suites", stability_suites),
        ("BFGS vs closed-form W2", oracle_equivalence),
        ("property checks", property_checks),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
