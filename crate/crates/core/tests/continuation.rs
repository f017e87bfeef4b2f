use bifloop_core::continuation::{
    arclength_step, branch_switch, continue_in_d, deflated_probe, detect_trivial_bifurcations,
    isola_seed_candidates, trace_branch, Bifurcation, Branch, BranchPoint, ContinuationConfig, Seed,
    Tangency, Termination,
};
use bifloop_core::error::Error;
use bifloop_core::grid::{Grid, Interval};
use bifloop_core::pencil::lambda1;
use bifloop_core::problem::{residual, ProblemParams, Sign, SignClass};
use nalgebra::DVector;

struct Run {
    g: Grid,
    p: ProblemParams,
    cfg: ContinuationConfig,
}

impl Run {
    fn new(n: usize, d: f64, q: u32) -> Self {
        let g = Grid::build(n, Interval::default()).unwrap();
        let p = ProblemParams::new(d, q, vec![1.0], &g).unwrap();
        Run {
            g,
            p,
            cfg: ContinuationConfig::default(),
        }
    }

    fn seeds(&self) -> Vec<Seed> {
        detect_trivial_bifurcations(&self.p, &self.g, (-4.0, 4.0), 0.01)
            .iter()
            .flat_map(|b| branch_switch(&self.p, &self.g, &self.cfg, b))
            .map(|s| s.unwrap())
            .collect()
    }

    fn seed(&self, lam_sign: f64, sign: Sign) -> Seed {
        self.seeds()
            .into_iter()
            .find(|s| s.point.lam * lam_sign >= 0.0 && s.point.sign.sign() == Some(sign))
            .unwrap()
    }

    fn trace(&self, seed: &Seed) -> Branch {
        trace_branch(&self.p, &self.g, &self.cfg, seed)
    }
}

fn check_points(run: &Run, b: &Branch) {
    let sign = b.sign().unwrap();
    for (i, pt) in b.points.iter().enumerate() {
        let r = residual(&run.p, pt.lam, &pt.u, &run.g).unwrap().amax();
        assert!(r <= 1e-10 * (1.0 + pt.sup_norm), "point {i} residual {r}");
        assert!((run.cfg.norm(&pt.tangent) - 1.0).abs() < 1e-10);
        if pt.sup_norm >= run.cfg.trivial_threshold {
            assert_eq!(pt.sign.sign(), Some(sign), "point {i} sign {:?}", pt.sign);
        }
    }
    for w in b.points.windows(2) {
        assert!(run.cfg.inner(&w[0].tangent, &w[1].tangent) > 0.0);
    }
}

fn dlam_sign_changes(b: &Branch) -> usize {
    b.points
        .windows(2)
        .filter(|w| w[0].tangent.dlam * w[1].tangent.dlam < 0.0)
        .count()
}

/// Sign changes of dλ around a closed loop, including the turn at the vertex
/// where the end meets the start.
fn dlam_sign_changes_around(b: &Branch) -> usize {
    let first = b.points.first().unwrap().tangent.dlam;
    let last = b.points.last().unwrap().tangent.dlam;
    dlam_sign_changes(b) + usize::from(first * last < 0.0)
}

#[test]
fn simple_points_match_closed_form() {
    for d in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let run = Run::new(200, d, 4);
        let l1 = lambda1(run.p.d, 1.0, run.p.sigma1).unwrap();
        let tol = 1e-3f64.max(10.0 * run.g.h * run.g.h);
        let b = detect_trivial_bifurcations(&run.p, &run.g, (-4.0, 4.0), 0.01);
        assert_eq!(b.len(), 2, "d={d}");
        assert!((b[0].lambda0 + l1).abs() <= tol && (b[1].lambda0 - l1).abs() <= tol);
    }
}

#[test]
fn seed_counts() {
    let run = Run::new(200, 0.25, 5);
    let b = detect_trivial_bifurcations(&run.p, &run.g, (-4.0, 4.0), 0.01);
    let top = b.iter().find(|b| b.lambda0 > 0.0).unwrap();
    let seeds: Vec<Seed> = branch_switch(&run.p, &run.g, &run.cfg, top)
        .into_iter()
        .map(|s| s.unwrap())
        .collect();
    assert_eq!(seeds.len(), 2);
    assert_eq!(seeds[0].point.sign, SignClass::StrictlyPositive);
    assert_eq!(seeds[1].point.sign, SignClass::StrictlyNegative);

    let odd = Run::new(200, 1.0, 5).seeds();
    assert_eq!(odd.len(), 4);
    for s in &odd {
        match s.point.sign {
            SignClass::StrictlyPositive => assert!(s.point.lam > 0.0),
            SignClass::StrictlyNegative => assert!(s.point.lam < 0.0),
            other => panic!("{other:?}"),
        }
    }

    let even = Run::new(200, 1.0, 4).seeds();
    assert_eq!(even.len(), 4);
    let pos: Vec<&Seed> = even
        .iter()
        .filter(|s| s.point.sign == SignClass::StrictlyPositive)
        .collect();
    let neg: Vec<&Seed> = even
        .iter()
        .filter(|s| s.point.sign == SignClass::StrictlyNegative)
        .collect();
    assert_eq!(pos.len(), 2);
    assert!(pos.iter().all(|s| s.point.lam > 0.0));
    assert_eq!(neg.len(), 2);
    assert!(neg.iter().any(|s| s.point.lam < 0.0) && neg.iter().any(|s| s.point.lam > 0.0));
}

#[test]
fn link_bulges_outwards_then_folds_back() {
    let run = Run::new(200, 0.25, 5);
    let l1 = lambda1(run.p.d, 1.0, run.p.sigma1).unwrap();
    let seed = run.seed(1.0, Sign::Positive);
    let out = arclength_step(&run.p, &run.g, &run.cfg, &seed.point, 1e-3).unwrap();
    assert!(out.point.lam > seed.point.lam);
    assert!(out.point.sup_norm > seed.point.sup_norm);
    let b = run.trace(&seed);
    let (lo, hi) = b.lambda_range();
    assert!(hi > l1 + 0.05 && lo < -l1 + 2e-3);
    assert_eq!(dlam_sign_changes(&b), 1);
}

#[test]
fn link_returns_at_opposite_point() {
    let run = Run::new(200, 0.25, 5);
    let l1 = lambda1(run.p.d, 1.0, run.p.sigma1).unwrap();
    for sign in [Sign::Positive, Sign::Negative] {
        let b = run.trace(&run.seed(1.0, sign));
        match b.termination {
            Termination::ReturnedToTrivial { lambda_end } => {
                assert!((lambda_end + l1).abs() <= 2e-3, "{lambda_end}")
            }
            ref t => panic!("{t:?}"),
        }
        check_points(&run, &b);
    }
}

#[test]
fn critical_loops_close_and_turn() {
    let run = Run::new(200, 1.0, 4);
    let b = run.trace(&run.seed(1.0, Sign::Positive));
    assert!(
        matches!(b.termination, Termination::LoopClosed { defect } if defect <= 1e-3),
        "{:?}",
        b.termination
    );
    assert!(dlam_sign_changes_around(&b) >= 2);
    check_points(&run, &b);

    let run = Run::new(200, 1.0, 5);
    let b = run.trace(&run.seed(-1.0, Sign::Negative));
    assert!(
        matches!(b.termination, Termination::LoopClosed { .. }),
        "{:?}",
        b.termination
    );
    assert!(b.points.iter().all(|pt| pt.lam < 1e-9));
    check_points(&run, &b);
}

#[test]
fn even_arm_leaves_the_window() {
    let run = Run::new(200, 0.5, 4);
    let b = run.trace(&run.seed(1.0, Sign::Negative));
    match b.termination {
        Termination::WindowExit { lambda_exit } => assert!(lambda_exit >= run.cfg.lambda_max),
        ref t => panic!("{t:?}"),
    }
    assert!(b.points.iter().all(|pt| pt.sup_norm >= run.cfg.trivial_threshold));
    check_points(&run, &b);
}

#[test]
fn closure_defect_shrinks_under_refinement() {
    let mut gaps = Vec::new();
    for n in [100, 200, 400] {
        let run = Run::new(n, 1.0, 5);
        let b = run.trace(&run.seed(1.0, Sign::Positive));
        assert!(
            matches!(b.termination, Termination::LoopClosed { defect } if defect <= run.cfg.closure_tol),
            "n={n} {:?}",
            b.termination
        );
        // At d = 1 exactly the mesh is slightly subcritical, so the loop
        // opens into a link between ±λ₁(h).
        let p = run.p.with_d(1.0).unwrap();
        let l1 = lambda1(p.d, 1.0, p.sigma1).unwrap();
        let bif = Bifurcation {
            lambda0: l1,
            tangency: Tangency::Simple,
        };
        let cfg = ContinuationConfig {
            seed_amplitude: 1e-3,
            ..run.cfg.clone()
        };
        let seed = branch_switch(&p, &run.g, &cfg, &bif).remove(0).unwrap();
        let b = trace_branch(&p, &run.g, &cfg, &seed);
        let end = match b.termination {
            Termination::ReturnedToTrivial { lambda_end } => lambda_end,
            ref t => panic!("n={n} {t:?} from {l1}"),
        };
        assert!((end + l1).abs() <= 0.1 * l1, "n={n} end {end} vs {}", -l1);
        let start = l1;
        let w = run.cfg.w_lambda;
        gaps.push(w.sqrt() * (start - end).abs());
    }
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
}

#[test]
fn traces_are_bit_identical() {
    let run = Run::new(200, 1.0, 5);
    let seed = run.seed(1.0, Sign::Positive);
    let a = run.trace(&seed);
    let b = run.trace(&seed);
    assert_eq!(a, b);
}

fn loop_point(run: &Run) -> (Branch, BranchPoint) {
    let b = run.trace(&run.seed(1.0, Sign::Positive));
    let i = isola_seed_candidates(&b)[0];
    let pt = b.points[i].clone();
    (b, pt)
}

#[test]
fn homotopy_reaches_slightly_supercritical_diffusion() {
    let run = Run::new(200, 1.0, 4);
    let (_, pt) = loop_point(&run);
    let r = continue_in_d(&run.p, &run.g, &run.cfg, &pt, 1.02, 10).unwrap();
    assert!(r.completed);
    assert_eq!(r.d_achieved, 1.02);
    assert_eq!(r.point.sign, SignClass::StrictlyPositive);
    assert!(r.point.u.min() > 0.0);
    let here = run.p.with_d(1.02).unwrap();
    assert!(residual(&here, r.point.lam, &r.point.u, &run.g).unwrap().amax() <= 1e-10);
}

#[test]
fn homotopy_with_zero_distance_returns_input() {
    let run = Run::new(200, 1.0, 4);
    let (_, pt) = loop_point(&run);
    let r = continue_in_d(&run.p, &run.g, &run.cfg, &pt, run.p.d, 5).unwrap();
    assert!(r.completed);
    assert_eq!(r.point, pt);
}

#[test]
fn homotopy_refuses_fold_points() {
    let run = Run::new(200, 1.0, 4);
    let b = run.trace(&run.seed(1.0, Sign::Positive));
    let i = b
        .points
        .windows(2)
        .position(|w| w[0].tangent.dlam * w[1].tangent.dlam < 0.0 && w[0].sup_norm > 0.1)
        .unwrap();
    // Bisect the step length from point i to land on the fold.
    let start = &b.points[i];
    let dl0 = start.tangent.dlam;
    let (mut lo, mut hi) = (0.0, b.points[i + 1].s - start.s);
    let mut fold = start.clone();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let pt = arclength_step(&run.p, &run.g, &run.cfg, start, mid)
            .unwrap()
            .point;
        if pt.tangent.dlam * dl0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        fold = pt;
    }
    let err = continue_in_d(&run.p, &run.g, &run.cfg, &fold, 1.02, 10).unwrap_err();
    assert!(
        matches!(err, Error::Precondition(_) | Error::Singular(_)),
        "{err:?}"
    );
}

#[test]
fn deflation_examples() {
    let run = Run::new(200, 2.0, 4);
    let hits = deflated_probe(&run.p, &run.g, &run.cfg, -0.5, &[], 1.0, 30, 7).unwrap();
    assert!(
        hits.iter().all(|h| h.sign != SignClass::StrictlyPositive),
        "{}",
        hits.len()
    );

    let run = Run::new(200, 0.5, 4);
    let hits = deflated_probe(&run.p, &run.g, &run.cfg, 0.0, &[], -1.0, 30, 7).unwrap();
    assert!(
        hits.iter().all(|h| h.sign != SignClass::StrictlyNegative),
        "{}",
        hits.len()
    );

    let run = Run::new(200, 0.25, 5);
    let hits = deflated_probe(&run.p, &run.g, &run.cfg, 0.0, &[], 1.0, 10, 7).unwrap();
    assert!(hits.iter().any(|h| h.sign == SignClass::StrictlyPositive));
    for h in &hits {
        assert!(h.residual <= 1e-10);
        assert!(h.u.amax() > 0.0);
    }
}

#[test]
fn deflation_skips_known_solutions() {
    let run = Run::new(200, 0.25, 5);
    let first = deflated_probe(&run.p, &run.g, &run.cfg, 0.0, &[], 1.0, 10, 3).unwrap();
    let known: Vec<DVector<f64>> = first
        .iter()
        .filter(|h| h.sign == SignClass::StrictlyPositive)
        .map(|h| h.u.clone())
        .collect();
    assert!(!known.is_empty());
    let again = deflated_probe(&run.p, &run.g, &run.cfg, 0.0, &known, 1.0, 10, 3).unwrap();
    for h in &again {
        for k in &known {
            assert!(run.g.l2_norm(&(&h.u - k)) > 1e-3);
        }
    }
}
