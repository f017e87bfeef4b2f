use bifloop_core::continuation::{fit_germ, ContinuationConfig};
use bifloop_core::grid::{Grid, Interval};
use bifloop_core::problem::ProblemParams;
use bifloop_core::reduction::{
    edge_cancellation, ls_coefficients, newton_polygon, puiseux_branches, ReducedCoefficients,
};
use proptest::prelude::*;
use std::collections::BTreeSet;

fn critical(q: u32) -> (Grid, ProblemParams) {
    let g = Grid::build(200, Interval::default()).unwrap();
    let p = ProblemParams::new(1.0, q, vec![1.0], &g).unwrap();
    (g, p)
}

/// Lower hull vertices by brute force: a point is a vertex of the decreasing
/// lower hull if some line through it has every other point strictly above.
fn brute_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut out = BTreeSet::new();
    for &v in points {
        // Supporting lines with slopes −1/k and −k for a fan of k.
        let supported = (1..400).any(|k| {
            [k as f64 / 20.0, 20.0 / k as f64].iter().any(|&m| {
                points
                    .iter()
                    .filter(|&&w| w != v)
                    .all(|&w| (w.1 - v.1) as f64 + m * (w.0 - v.0) as f64 > 1e-12)
            })
        });
        if supported {
            out.insert(v);
        }
    }
    out.into_iter().collect()
}

#[test]
fn hull_matches_brute_force_example() {
    let pts = [(0, 2), (1, 1), (2, 1), (3, 0)];
    let hull = newton_polygon(&pts).unwrap();
    assert_eq!(hull.vertices, vec![(0, 2), (1, 1), (3, 0)]);
    assert_eq!(hull.vertices, brute_hull(&pts));
}

#[test]
fn root_germs_fit_their_prediction() {
    let cfg = ContinuationConfig::default();
    for q in [4, 5, 6] {
        let (g, p) = critical(q);
        let rc = ls_coefficients(&p, &g).unwrap();
        for germ in puiseux_branches(&rc).unwrap() {
            let e = germ.exponent.to_f64();
            if e >= 1.0 {
                continue;
            }
            let f = fit_germ(&p, &g, &cfg, &germ).unwrap();
            assert!((f.fit.exponent - e).abs() <= 0.1 * e, "q={q} {f:?}");
            let rel = (f.fit.coefficient - germ.coefficient).abs() / germ.coefficient;
            assert!(rel <= 0.05, "q={q} {germ:?} fitted {}", f.fit.coefficient);
        }
    }
}

#[test]
fn slope_germ_coefficient_is_half_the_reduced_value() {
    // The linear germ of the discrete problem has x ≈ |a|²/(4d·b2)·λ, half the
    // coefficient obtained from the λ² term of the reduced equation.
    let cfg = ContinuationConfig::default();
    for q in [4, 5] {
        let (g, p) = critical(q);
        let rc = ls_coefficients(&p, &g).unwrap();
        let slope = puiseux_branches(&rc)
            .unwrap()
            .into_iter()
            .find(|b| b.exponent.to_f64() == 1.0)
            .unwrap();
        assert!((slope.coefficient - 0.5 / (p.d * rc.b2)).abs() < 1e-12);
        let f = fit_germ(&p, &g, &cfg, &slope).unwrap();
        assert!((f.fit.exponent - 1.0).abs() < 0.1, "{f:?}");
        let half = 0.25 / (p.d * rc.b2);
        assert!(
            (f.fit.coefficient - half).abs() < 0.05 * half,
            "q={q} {}",
            f.fit.coefficient
        );
    }
}

proptest! {
    #[test]
    fn reduced_polygon_has_three_vertices(q in 4i64..40) {
        let poly = newton_polygon(&[(0, 2), (1, 1), (q - 1, 0)]).unwrap();
        prop_assert_eq!(poly.vertices, vec![(0, 2), (1, 1), (q - 1, 0)]);
    }

    #[test]
    fn hull_agrees_with_brute_force(pts in proptest::collection::btree_set((0i64..8, 0i64..8), 1..10)) {
        let pts: Vec<(i64, i64)> = pts.into_iter().collect();
        let hull = newton_polygon(&pts).unwrap();
        // Keep only the strictly decreasing part of the brute-force hull.
        let brute = brute_hull(&pts);
        let mut expected: Vec<(i64, i64)> = Vec::new();
        for v in brute {
            if expected.last().is_none_or(|l| v.1 < l.1) {
                expected.push(v);
            }
        }
        prop_assert_eq!(hull.vertices, expected);
    }

    #[test]
    fn germs_cancel_the_dominant_monomials(
        q in 4u32..12,
        c0 in 0.1f64..2.0,
        b2 in 0.1f64..2.0,
        bq in 0.1f64..2.0,
    ) {
        let rc = ReducedCoefficients { c0: -c0, b2, bq, q, d: 1.0 };
        let germs = puiseux_branches(&rc).unwrap();
        prop_assert_eq!(germs.len(), 4);
        for germ in &germs {
            prop_assert!(edge_cancellation(&rc, germ) < 1e-12, "{:?}", germ);
        }
    }
}
