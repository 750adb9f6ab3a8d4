use proptest::prelude::*;
use rand::Rng;
use tmap::distributions::substream;
use tmap::optimize::{bfgs_minimize, solve_spd, BfgsOptions, FnObjective, Matrix};

/// `A = Qᵀ D Q + I/10` with `Q` random and `D` diagonal in `[0, 10)`.
fn random_spd(seed: u64, k: usize) -> Matrix {
    let mut rng = substream(seed, "spd");
    let q: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let d: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..10.0)).collect();
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| (0..k).map(|m| q[m][i] * d[m] * q[m][j]).sum::<f64>() + if i == j { 0.1 } else { 0.0 })
                .collect()
        })
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

fn random_vec(seed: u64, label: &str, k: usize) -> Vec<f64> {
    let mut rng = substream(seed, label);
    (0..k).map(|_| rng.random_range(-3.0..3.0)).collect()
}

fn quadratic<'a>(a: &'a Matrix, b: &[f64]) -> FnObjective<impl Fn(&[f64]) -> f64 + 'a, impl Fn(&[f64], &mut [f64]) + 'a> {
    let b = b.to_vec();
    let b2 = b.clone();
    FnObjective {
        value: move |x: &[f64]| {
            let ax = a.mul_vec(x);
            0.5 * x.iter().zip(&ax).map(|(u, v)| u * v).sum::<f64>() - x.iter().zip(&b).map(|(u, v)| u * v).sum::<f64>()
        },
        gradient: move |x: &[f64], g: &mut [f64]| {
            let ax = a.mul_vec(x);
            for ((gi, ai), bi) in g.iter_mut().zip(ax).zip(&b2) {
                *gi = ai - bi;
            }
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solve_spd_residual(seed in any::<u64>(), k in 1usize..20) {
        let a = random_spd(seed, k);
        let b = random_vec(seed, "b", k);
        let x = solve_spd(&a, &b).unwrap();
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            prop_assert!((ri - bi).abs() < 1e-9 * (1.0 + bi.abs()));
        }
    }

    #[test]
    fn quadratic_finite_termination(seed in any::<u64>(), k in 1usize..8) {
        let a = random_spd(seed, k);
        let b = random_vec(seed, "b", k);
        let obj = quadratic(&a, &b);
        // near-exact line search: k + 1 steps reach the minimizer up to the
        // curvature tolerance
        let opts = BfgsOptions { tol: 0.0, c2: 1e-6, max_iter: k + 1, ..BfgsOptions::default() };
        let rep = bfgs_minimize(&obj, &vec![0.0; k], &opts).unwrap();
        let g0 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(rep.iterations <= k + 1);
        prop_assert!(rep.gradient_norm <= opts.c2 * g0, "gradient {} after {} iterations", rep.gradient_norm, rep.iterations);
        let exact = solve_spd(&a, &b).unwrap();
        for (x, e) in rep.coefficients.iter().zip(&exact) {
            prop_assert!((x - e).abs() < 1e-6 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn history_non_increasing_and_convergence_flag(seed in any::<u64>(), k in 2usize..6, shift in -2.0..2.0f64) {
        // Rosenbrock-type chain from a random start
        let obj = FnObjective {
            value: |x: &[f64]| x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum::<f64>(),
            gradient: |x: &[f64], g: &mut [f64]| {
                g.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..x.len() - 1 {
                    let t = x[i + 1] - x[i] * x[i];
                    g[i] += -400.0 * x[i] * t - 2.0 * (1.0 - x[i]);
                    g[i + 1] += 200.0 * t;
                }
            },
        };
        let x0: Vec<f64> = random_vec(seed, "x0", k).iter().map(|v| v / 3.0 + shift).collect();
        let opts = BfgsOptions { tol: 1e-8, max_iter: 2000, ..BfgsOptions::default() };
        let rep = bfgs_minimize(&obj, &x0, &opts).unwrap();
        prop_assert!(rep.history.windows(2).all(|w| w[1] <= w[0]), "history increased");
        if rep.converged {
            let collapsed = rep.gradient_norm > opts.tol;
            prop_assert!(!collapsed || rep.history.windows(2).all(|w| w[1] <= w[0]));
        }
        prop_assert_eq!(rep.history.len(), rep.iterations + 1);
    }
}

#[test]
fn rosenbrock_standard_start() {
    let obj = FnObjective {
        value: |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
        gradient: |x: &[f64], g: &mut [f64]| {
            g[0] = -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]);
            g[1] = 200.0 * (x[1] - x[0] * x[0]);
        },
    };
    let rep = bfgs_minimize(&obj, &[-1.2, 1.0], &BfgsOptions::default()).unwrap();
    assert!(rep.converged);
    assert!((rep.coefficients[0] - 1.0).abs() < 1e-6 && (rep.coefficients[1] - 1.0).abs() < 1e-6, "{rep:?}");
}
