use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::pencil::{peclet_limit, principal_eigenvalue};
use crate::problem::ProblemParams;

/// How the principal eigenvalue meets zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tangency {
    /// Transversal zero crossing.
    Simple,
    /// Touches zero without changing sign.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bifurcation {
    pub lambda0: f64,
    pub tangency: Tangency,
}

fn mu(p: &ProblemParams, g: &Grid, lam: f64) -> f64 {
    principal_eigenvalue(p, lam, g).unwrap_or(f64::NAN)
}

fn bisect_root(p: &ProblemParams, g: &Grid, mut a: f64, mut b: f64) -> f64 {
    let mut fa = mu(p, g, a);
    if fa == 0.0 {
        return a;
    }
    if mu(p, g, b) == 0.0 {
        return b;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = mu(p, g, m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_max(p: &ProblemParams, g: &Grid, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (mu(p, g, c), mu(p, g, d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = mu(p, g, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = mu(p, g, d);
        }
    }
    // Golden section stalls where μ is flat to rounding; a parabola through
    // wider samples locates the vertex more accurately.
    let mut x = 0.5 * (a + b);
    let delta = 1e-3 * (1.0 + x.abs());
    let (fl, f0, fr) = (mu(p, g, x - delta), mu(p, g, x), mu(p, g, x + delta));
    let curv = fl - 2.0 * f0 + fr;
    if curv < 0.0 {
        let shift = 0.5 * delta * (fl - fr) / curv;
        if shift.abs() < delta {
            x += shift;
        }
    }
    (x, mu(p, g, x))
}

/// Scans the principal eigenvalue `μ(λ)` of the linearization over
/// `lam_range` and reports its zeros: sign changes as simple points, local
/// maxima within `10·h²·d` of zero as quadratic tangencies.
///
/// The scan range is clipped to where the centered scheme stays
/// symmetrizable.
pub fn detect_trivial_bifurcations(
    p: &ProblemParams,
    g: &Grid,
    lam_range: (f64, f64),
    scan_step: f64,
) -> Vec<Bifurcation> {
    if !(scan_step > 0.0) || !(lam_range.0 < lam_range.1) {
        return Vec::new();
    }
    let limit = 0.999 * peclet_limit(p, g);
    let lo = lam_range.0.max(-limit);
    let hi = lam_range.1.min(limit);
    if !(lo < hi) {
        return Vec::new();
    }
    let tol = 10.0 * g.h * g.h * p.d;

    let count = ((hi - lo) / scan_step).ceil() as usize;
    let lams: Vec<f64> = (0..=count)
        .map(|i| if i == count { hi } else { lo + i as f64 * scan_step })
        .collect();
    let mus: Vec<f64> = lams.iter().map(|&l| mu(p, g, l)).collect();

    let mut simple = Vec::new();
    for i in 0..lams.len() - 1 {
        let (m0, m1) = (mus[i], mus[i + 1]);
        if m0 == 0.0 {
            simple.push(lams[i]);
        } else if m0 * m1 < 0.0 {
            simple.push(bisect_root(p, g, lams[i], lams[i + 1]));
        }
    }
    if mus[lams.len() - 1] == 0.0 {
        simple.push(hi);
    }

    let mut quadratic = Vec::new();
    for i in 1..lams.len() - 1 {
        let is_max = mus[i] >= mus[i - 1] && mus[i] >= mus[i + 1] && mus[i] > mus[i - 1].min(mus[i + 1]);
        if !is_max {
            continue;
        }
        let (lstar, mstar) = golden_max(p, g, lams[i - 1], lams[i + 1]);
        if mstar.abs() <= tol {
            // Crossings inside the hump are the same degenerate point.
            let left = (0..i)
                .rev()
                .find(|&k| mus[k] <= -tol)
                .map(|k| lams[k])
                .unwrap_or(f64::NEG_INFINITY);
            let right = (i + 1..lams.len())
                .find(|&k| mus[k] <= -tol)
                .map(|k| lams[k])
                .unwrap_or(f64::INFINITY);
            simple.retain(|&r| r <= left || r >= right);
            quadratic.push(lstar);
        } else if mstar > 0.0 && mus[i - 1] < 0.0 && mus[i] < 0.0 && mus[i + 1] < 0.0 {
            simple.push(bisect_root(p, g, lams[i - 1], lstar));
            simple.push(bisect_root(p, g, lstar, lams[i + 1]));
        }
    }

    let mut out: Vec<Bifurcation> = simple
        .into_iter()
        .map(|l| Bifurcation {
            lambda0: l,
            tangency: Tangency::Simple,
        })
        .chain(quadratic.into_iter().map(|l| Bifurcation {
            lambda0: l,
            tangency: Tangency::Quadratic,
        }))
        .collect();
    out.sort_by(|a, b| a.lambda0.total_cmp(&b.lambda0));
    out.dedup_by(|b, a| (a.lambda0 - b.lambda0).abs() < 1e-12 && a.tangency == b.tangency);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Interval;

    fn params(d: f64) -> (Grid, ProblemParams) {
        let g = Grid::build(200, Interval::default()).unwrap();
        let p = ProblemParams::new(d, 4, vec![1.0], &g).unwrap();
        (g, p)
    }

    #[test]
    fn simple_pair_below_critical() {
        let (g, p) = params(0.25);
        let b = detect_trivial_bifurcations(&p, &g, (-1.0, 1.0), 0.01);
        assert_eq!(b.len(), 2);
        for (bif, sign) in b.iter().zip([-1.0, 1.0]) {
            assert_eq!(bif.tangency, Tangency::Simple);
            assert!((bif.lambda0 - sign * 0.866_025_4).abs() < 1e-3);
        }
    }

    #[test]
    fn quadratic_at_critical() {
        let (g, p) = params(1.0);
        let b = detect_trivial_bifurcations(&p, &g, (-1.0, 1.0), 0.01);
        assert_eq!(b.len(), 1, "{b:?}");
        assert_eq!(b[0].tangency, Tangency::Quadratic);
        assert!(b[0].lambda0.abs() < 1e-6);
    }

    #[test]
    fn nothing_above_critical() {
        let (g, p) = params(2.0);
        assert!(detect_trivial_bifurcations(&p, &g, (-2.0, 2.0), 0.01).is_empty());
    }

    #[test]
    fn hidden_pair_between_samples() {
        let (g, p) = params(0.9);
        // λ₁(0.9) ≈ 0.6: samples at −0.7, 0.65 and 2.0 are all negative.
        let b = detect_trivial_bifurcations(&p, &g, (-0.7, 2.0), 1.35);
        assert_eq!(b.len(), 2, "{b:?}");
    }
}
