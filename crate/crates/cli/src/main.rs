//! `tmap`: convergence studies, stability suites and monotonicity checks.
//!
//! Exit codes: 0 on success, 2 when some rows or trials fail, 1 on a fatal
//! error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use tmap::distributions::{substream, Distribution1D};
use tmap::divergences::LikelihoodForm;
use tmap::experiments::{self, fit_rate, RateModel, StudyConfig, StudyKind, StudyOutcome};
use tmap::maps::{Component, MapComponent, Rectifier};
use tmap::stability::{self, CheckSettings, StabilityReport, SuiteSettings, Theorem, WpMode};

#[derive(Parser, Debug)]
#[command(name = "tmap", version, about = "Transport-map convergence studies and stability checks")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Quadrature nodes (Clenshaw–Curtis for studies, Gauss–Legendre for stability checks).
    #[arg(long, global = true)]
    quad_points: Option<usize>,
    /// Output file. Studies and stability suites write CSV here plus a JSON sidecar.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file whose keys override the command-line values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write 0 for wall times so reruns are byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Legendre W₂ fits of (x^{2k} sign x)♯uniform.
    CompactW2 {
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, value_parser = parse_degrees)]
        degrees: Option<Degrees>,
        #[command(flatten)]
        common: StudyArgs,
    },
    /// Hermite-function W_p fits of the Gumbel(1, 2) distribution.
    GumbelWp {
        #[arg(long, default_value_t = 2)]
        p: u32,
        /// Fit MMD with this kernel scale instead of W_p.
        #[arg(long)]
        mmd_gamma: Option<f64>,
        #[arg(long, value_parser = parse_degrees)]
        degrees: Option<Degrees>,
        #[arg(long)]
        test_n: Option<usize>,
        /// Smoothing ε of the W₁ objective.
        #[arg(long)]
        smoothing: Option<f64>,
        #[command(flatten)]
        common: StudyArgs,
    },
    /// Monotone Hermite-function KL fits to Gumbel(0, 1) samples.
    GumbelKl {
        #[arg(long, value_parser = parse_degrees)]
        degrees: Option<Degrees>,
        #[arg(long)]
        train_n: Option<usize>,
        #[arg(long)]
        test_n: Option<usize>,
        #[arg(long)]
        rectifier: Option<Rectifier>,
        #[arg(long, value_enum)]
        likelihood: Option<Likelihood>,
        #[command(flatten)]
        common: StudyArgs,
    },
    /// Stability inequality suites on random map pairs.
    Stability {
        #[arg(long)]
        theorem: Theorem,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, value_enum, default_value_t = Mode::Empirical)]
        mode: Mode,
        #[arg(long, default_value = "uniform")]
        reference: Distribution1D,
        /// Draws for sample-based estimates.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Monotonicity probability of a one-dimensional map.
    Monotonicity {
        /// Map as JSON, inline or as a file path.
        #[arg(long)]
        map: String,
        #[arg(long, default_value_t = experiments::DEFAULT_PAIRS)]
        pairs: usize,
        #[arg(long, default_value = "uniform")]
        reference: Distribution1D,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct StudyArgs {
    /// Monotonicity test pairs per degree.
    #[arg(long)]
    pairs: Option<usize>,
    /// BFGS gradient-norm tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// BFGS iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Likelihood {
    Exact,
    Unhalved,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Monotone,
    Empirical,
}

#[derive(Debug, Clone)]
struct Degrees(Vec<usize>);

/// `1,2,4`, `1..10` (inclusive) or a mix such as `1..4,10,20`.
fn parse_degrees(s: &str) -> std::result::Result<Degrees, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|e| format!("{part:?}: {e}"))?;
            let b: usize = b.trim().trim_start_matches('=').parse().map_err(|e| format!("{part:?}: {e}"))?;
            if b < a {
                return Err(format!("empty range {part:?}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|e| format!("{part:?}: {e}"))?);
        }
    }
    if out.is_empty() {
        return Err("no degrees given".into());
    }
    Ok(Degrees(out))
}

/// Settings of the `stability` subcommand, overridable from a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StabilityConfig {
    theorem: Theorem,
    trials: usize,
    p: f64,
    q: f64,
    gamma: f64,
    mode: WpMode,
    reference: Distribution1D,
    quad_points: usize,
    samples: usize,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MonotonicityConfig {
    pairs: usize,
    reference: Distribution1D,
    seed: u64,
}

/// Overlays the keys of `file` on `base`; nested tables merge key by key.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, file: Option<&Path>) -> Result<T> {
    let Some(path) = file else {
        let json = serde_json::to_value(base)?;
        return Ok(serde_json::from_value(json)?);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let over: toml::Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
    let mut merged = toml::Value::try_from(base).context("encoding defaults")?;
    merge(&mut merged, toml::Value::Table(over));
    merged.try_into().with_context(|| format!("applying config {}", path.display()))
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_study_args(cfg: &mut StudyConfig, args: &StudyArgs, degrees: Option<Degrees>) {
    if let Some(d) = degrees {
        cfg.degrees = d.0;
    }
    if let Some(p) = args.pairs {
        cfg.monotonicity_pairs = p;
    }
    if let Some(t) = args.tol {
        cfg.bfgs.tol = t;
    }
    if let Some(m) = args.max_iter {
        cfg.bfgs.max_iter = m;
    }
}

fn study_config(cli: &Cli) -> Result<StudyConfig> {
    let mut cfg = match &cli.command {
        Command::CompactW2 { k, degrees, common } => {
            let mut cfg = StudyConfig::compact_w2(*k)?;
            apply_study_args(&mut cfg, common, degrees.clone());
            cfg
        }
        Command::GumbelWp { p, mmd_gamma, degrees, test_n, smoothing, common } => {
            let mut cfg = StudyConfig::gumbel_wp(*p)?;
            if let Some(g) = mmd_gamma {
                cfg.divergence = experiments::Divergence::Mmd { gamma: *g };
            }
            if let Some(n) = test_n {
                cfg.test_samples = *n;
            }
            if let Some(e) = smoothing {
                cfg.smoothing = *e;
            }
            apply_study_args(&mut cfg, common, degrees.clone());
            cfg
        }
        Command::GumbelKl { degrees, train_n, test_n, rectifier, likelihood, common } => {
            let mut cfg = StudyConfig::gumbel_kl()?;
            if let Some(n) = train_n {
                cfg.train_samples = *n;
            }
            if let Some(n) = test_n {
                cfg.test_samples = *n;
            }
            if let Some(r) = rectifier {
                cfg.rectifier = *r;
            }
            if let Some(l) = likelihood {
                cfg.likelihood = match l {
                    Likelihood::Exact => LikelihoodForm::Exact,
                    Likelihood::Unhalved => LikelihoodForm::Unhalved,
                };
            }
            apply_study_args(&mut cfg, common, degrees.clone());
            cfg
        }
        _ => unreachable!("not a study command"),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(q) = cli.quad_points {
        cfg.quad_points = q;
    }
    if cli.no_timing {
        cfg.record_timing = false;
    }
    cfg.output = cli.out.clone();
    let kind = cfg.kind;
    let cfg: StudyConfig = overlay(&cfg, cli.config.as_deref())?;
    if cfg.kind != kind {
        bail!("config file sets kind {} but the command runs {kind}", cfg.kind);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_study_summary(out: &StudyOutcome) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{} ({}), seed {}", out.config.kind, out.config.divergence, out.config.seed);
    for (row, detail) in out.rows.iter().zip(&out.details) {
        match &detail.failure {
            Some(f) => {
                let _ = writeln!(err, "  n={:>3}  FAILED: {f}", row.n);
            }
            None => {
                let _ = writeln!(
                    err,
                    "  n={:>3}  divergence={:.3e}  l2={:.3e}  p_mon={:.4}",
                    row.n, row.divergence, row.l2_err, row.p_mon
                );
            }
        }
    }
    let model = if out.config.kind == StudyKind::CompactW2 { RateModel::Power } else { RateModel::Exponential };
    if let Ok(fit) = fit_rate(&out.rows, model, 1..=usize::MAX) {
        let _ = writeln!(err, "  {model:?} rate slope {:.3} (rms log residual {:.3})", fit.slope, fit.residual);
    }
}

fn run_study(cli: &Cli) -> Result<bool> {
    let cfg = study_config(cli)?;
    let out = experiments::run_study(&cfg)?;
    match &cli.out {
        Some(path) => {
            let sidecar = out.write(path)?;
            eprintln!("wrote {} and {}", path.display(), sidecar.display());
        }
        None => print!("{}", out.to_csv()?),
    }
    print_study_summary(&out);
    Ok(out.failures().is_empty())
}

fn run_stability(cli: &Cli) -> Result<bool> {
    let Command::Stability { theorem, trials, p, q, gamma, mode, reference, samples } = &cli.command else {
        unreachable!("not the stability command")
    };
    let defaults = CheckSettings::default();
    let base = StabilityConfig {
        theorem: *theorem,
        trials: *trials,
        p: *p,
        q: *q,
        gamma: *gamma,
        mode: match mode {
            Mode::Monotone => WpMode::Monotone,
            Mode::Empirical => WpMode::Empirical,
        },
        reference: reference.clone(),
        quad_points: cli.quad_points.unwrap_or(defaults.quad_points),
        samples: samples.unwrap_or(defaults.samples),
        seed: cli.seed.unwrap_or(defaults.seed),
    };
    let cfg: StabilityConfig = overlay(&base, cli.config.as_deref())?;
    let settings = SuiteSettings {
        trials: cfg.trials,
        reference: cfg.reference.clone(),
        check: CheckSettings { quad_points: cfg.quad_points, samples: cfg.samples, seed: cfg.seed },
    };
    let report: StabilityReport = match cfg.theorem {
        Theorem::Wp => stability::wp_stability_suite(cfg.p, cfg.q, cfg.mode, &settings)?,
        Theorem::Mmd => stability::mmd_stability_suite(cfg.gamma, &settings)?,
        Theorem::Kl => stability::kl_probe_suite(cfg.trials, cfg.seed, &stability::default_t_grid())?,
    };
    let doc = serde_json::json!({ "config": cfg, "report": report });
    match &cli.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, report.to_csv())?;
            let sidecar = path.with_extension("json");
            std::fs::write(&sidecar, serde_json::to_string_pretty(&doc)?)?;
            eprintln!("wrote {} and {}", path.display(), sidecar.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    eprintln!(
        "{}: {} trials, max ratio {:.4}, {} violations{}",
        report.theorem,
        report.trial_count,
        report.max_ratio,
        report.violations.len(),
        report.slope.map(|s| format!(", slope {s:.3}")).unwrap_or_default()
    );
    Ok(report.passed())
}

fn load_map(arg: &str) -> Result<Component> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading map {arg}"))?
    };
    let map: Component = serde_json::from_str(&text).context("parsing map JSON")?;
    if map.input_dim() != 1 {
        bail!("monotonicity takes a one-dimensional map, got dimension {}", map.input_dim());
    }
    Ok(map)
}

fn run_monotonicity(cli: &Cli) -> Result<bool> {
    let Command::Monotonicity { map, pairs, reference } = &cli.command else {
        unreachable!("not the monotonicity command")
    };
    let map = load_map(map)?;
    let base = MonotonicityConfig { pairs: *pairs, reference: reference.clone(), seed: cli.seed.unwrap_or(0) };
    let cfg: MonotonicityConfig = overlay(&base, cli.config.as_deref())?;
    let mut rng = substream(cfg.seed, "monotonicity");
    let p = experiments::monotonicity_probability(&map, &cfg.reference, cfg.pairs, &mut rng)?;
    let doc = serde_json::json!({ "config": cfg, "p_mon": p });
    match &cli.out {
        Some(path) => std::fs::write(path, serde_json::to_string_pretty(&doc)?)?,
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors are fatal; help and version are not
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::CompactW2 { .. } | Command::GumbelWp { .. } | Command::GumbelKl { .. } => run_study(&cli),
        Command::Stability { .. } => run_stability(&cli),
        Command::Monotonicity { .. } => run_monotonicity(&cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
