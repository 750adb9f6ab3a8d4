use proptest::prelude::*;
use tmap::quadrature::{Interval, QuadratureRule, RuleKind, WeightedNodes};

fn interval() -> impl Strategy<Value = Interval> {
    (-5.0..5.0f64, 0.1..10.0f64).prop_map(|(a, len)| Interval::new(a, a + len).unwrap())
}

fn rule(kind: RuleKind, n: usize, iv: Interval) -> QuadratureRule {
    match kind {
        RuleKind::ClenshawCurtis => QuadratureRule::clenshaw_curtis(n, iv).unwrap(),
        RuleKind::GaussLegendre => QuadratureRule::gauss_legendre(n, iv).unwrap(),
    }
}

fn kind() -> impl Strategy<Value = RuleKind> {
    prop_oneof![Just(RuleKind::ClenshawCurtis), Just(RuleKind::GaussLegendre)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_exactness(kind in kind(), n in 2usize..200, iv in interval()) {
        let r = rule(kind, n, iv);
        let total = r.integrate(|_| 1.0).unwrap();
        prop_assert!((total - iv.length()).abs() <= 1e-12 * iv.length().max(1.0), "{total} vs {}", iv.length());
    }

    #[test]
    fn nodes_ascend_inside_interval(kind in kind(), n in 2usize..200, iv in interval()) {
        let r = rule(kind, n, iv);
        prop_assert_eq!(r.nodes().len(), r.weights().len());
        prop_assert!(r.nodes().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(r.nodes().iter().all(|&x| iv.contains(x)));
        if kind == RuleKind::ClenshawCurtis {
            prop_assert!(r.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn degree_exactness(kind in kind(), n in 2usize..40, frac in 0.0..1.0f64, a in 0.0..2.0f64, len in 0.5..3.0f64) {
        let exact_degree = match kind {
            RuleKind::ClenshawCurtis => n - 1,
            RuleKind::GaussLegendre => 2 * n - 1,
        };
        let m = (frac * exact_degree as f64).floor() as i32;
        let iv = Interval::new(a, a + len).unwrap();
        let got = rule(kind, n, iv).integrate(|x| x.powi(m)).unwrap();
        let b = a + len;
        let exact = (b.powi(m + 1) - a.powi(m + 1)) / (m + 1) as f64;
        prop_assert!((got - exact).abs() <= 1e-10 * exact.abs(), "x^{m}: {got} vs {exact}");
    }

    #[test]
    fn gauss_hermite_gaussian_moments(n in 2usize..60, frac in 0.0..1.0f64) {
        // exact for polynomial degree ≤ 2n - 1; even moments of N(0,1) are (m-1)!!
        let half = ((frac * (n - 1) as f64).floor() as i32).min(12);
        let m = 2 * half;
        let nodes = WeightedNodes::gauss_hermite(n).unwrap();
        let got = nodes.expect(|x| x.powi(m));
        let exact: f64 = (1..m).step_by(2).map(|k| k as f64).product();
        prop_assert!((got - exact).abs() <= 1e-10 * exact, "E[x^{m}] = {got}, want {exact}");
    }
}
