use bifloop_core::grid::{Grid, Interval};
use nalgebra::DVector;
use proptest::prelude::*;
use std::f64::consts::PI;

fn grid(n: usize) -> Grid {
    Grid::build(n, Interval::default()).unwrap()
}

#[test]
fn principal_eigenvalue_converges_at_second_order() {
    let ns = [100usize, 200, 400, 800];
    let errs: Vec<f64> = ns
        .iter()
        .map(|&n| (grid(n).principal_eigenpair().unwrap().0 - 1.0).abs())
        .collect();
    assert!(errs[3] < 1e-4, "{errs:?}");
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.6..4.4).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn eigenvector_matches_normalized_sine() {
    for n in [100, 200] {
        let g = grid(n);
        let (_, phi) = g.principal_eigenpair().unwrap();
        let exact = g.sample(|x| (2.0 / PI).sqrt() * x.sin());
        let dev = (&phi - exact).amax();
        assert!(dev < 2.0 * g.h * g.h, "n={n} dev={dev}");
    }
}

#[test]
fn quadrature_of_odd_sine_powers() {
    for n in [100, 200, 400] {
        let g = grid(n);
        let h2 = g.h * g.h;
        assert!((g.quad(&g.sample(f64::sin)) - 2.0).abs() < h2);
        assert!((g.quad(&g.sample(|x| x.sin().powi(3))) - 4.0 / 3.0).abs() < h2);
        assert_eq!(g.quad(&DVector::zeros(n)), 0.0);
    }
}

#[test]
fn negative_laplacian_is_positive_definite() {
    let g = grid(120);
    let sym = g.lap.scaled(-1.0).symmetrized().unwrap();
    assert_eq!(sym.count_below(0.0), 0);
    let smallest = sym.eigenvalue(0);
    assert!((smallest - 1.0).abs() < 1e-3);
}

#[test]
fn gradient_of_identity_is_one_inside() {
    let g = Grid::build(40, Interval::new(-1.0, 2.0).unwrap()).unwrap();
    let d = g.grad.mul_vec(&g.nodes).unwrap();
    for i in 1..g.n - 1 {
        assert!((d[i] - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadrature_is_linear_and_positive(
        n in 8usize..80,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed in proptest::collection::vec(0.0f64..1.0, 160),
    ) {
        let g = grid(n);
        let f = DVector::from_fn(n, |i, _| seed[i]);
        let h = DVector::from_fn(n, |i, _| seed[80 + i] - 0.5);
        let lhs = g.quad(&(&f * a + &h * b));
        let rhs = a * g.quad(&f) + b * g.quad(&h);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        prop_assert!(g.quad(&f) >= 0.0);
    }

    #[test]
    fn spacing_matches_interval(n in 8usize..500, lo in -5.0f64..5.0, len in 0.1f64..10.0) {
        let g = Grid::build(n, Interval::new(lo, lo + len).unwrap()).unwrap();
        prop_assert!((g.h - len / (n + 1) as f64).abs() < 1e-15 * len);
        prop_assert_eq!(g.nodes.len(), n);
    }
}
