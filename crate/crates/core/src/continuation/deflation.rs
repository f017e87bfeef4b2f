use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::newton::converged;
use super::{point_sign, ContinuationConfig};
use crate::error::Result;
use crate::grid::Grid;
use crate::problem::{jacobian_u, residual, ProblemParams, SignClass};

const MAX_ITER: usize = 80;
/// Squared distance below which a limit counts as an already known solution.
const KNOWN_RADIUS2: f64 = 1e-6;
const UPDATE_RTOL: f64 = 1e-6;
const UPDATE_ATOL: f64 = 1e-15;

/// A solution found by a deflated probe. Such hits are evidence of
/// existence, not a certificate of absence elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeHit {
    pub lam: f64,
    pub u: DVector<f64>,
    pub sign: SignClass,
    pub residual: f64,
}

fn dist2(g: &Grid, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    g.h * (a - b).norm_squared()
}

/// Deflation factor `∏(1/r² + 1)` and `∇ log` of it.
fn deflation(g: &Grid, u: &DVector<f64>, known: &[DVector<f64>]) -> (f64, DVector<f64>) {
    let mut m = 1.0;
    let mut w = DVector::zeros(u.len());
    for k in known {
        let r2 = dist2(g, u, k).max(1e-300);
        m *= 1.0 / r2 + 1.0;
        w -= (u - k) * (2.0 * g.h / (r2 * (r2 + 1.0)));
    }
    (m, w)
}

fn profile(g: &Grid, rng: &mut ChaCha8Rng, sign: f64) -> DVector<f64> {
    let amp = rng.random_range(0.05..3.0);
    let power = rng.random_range(0.5..2.0);
    let tilt = rng.random_range(-2.0..2.0);
    let (lo, len) = (g.interval.lo, g.interval.length());
    g.sample(|x| {
        let t = (x - lo) / len;
        sign * amp * (std::f64::consts::PI * t).sin().powf(power) * (tilt * t).exp()
    })
}

fn deflated_newton(
    p: &ProblemParams,
    g: &Grid,
    lam: f64,
    mut u: DVector<f64>,
    known: &[DVector<f64>],
    tol: f64,
) -> Result<Option<(DVector<f64>, f64)>> {
    let merit = |u: &DVector<f64>| -> Result<f64> {
        let (m, _) = deflation(g, u, known);
        Ok(m * residual(p, lam, u, g)?.amax())
    };
    for _ in 0..MAX_ITER {
        let f = residual(p, lam, &u, g)?;
        let r = f.amax();
        if !r.is_finite() || u.amax() > 1e6 {
            return Ok(None);
        }
        let Ok(lu) = jacobian_u(p, lam, &u, g).and_then(|j| j.factor()) else {
            return Ok(None);
        };
        let dn = -lu.solve(&f)?;
        // A small residual alone is not enough: near a degenerate u = 0 the
        // residual of a small profile is tiny while Newton still moves it.
        if converged(r, tol) && dn.amax() <= UPDATE_RTOL * u.amax() + UPDATE_ATOL {
            return Ok(Some((u, r)));
        }
        let (_, w) = deflation(g, &u, known);
        let denom = 1.0 - w.dot(&dn);
        let step = if denom.abs() > 1e-12 { dn / denom } else { dn };
        let m0 = merit(&u)?;
        let mut t = 1.0;
        let mut next = &u + &step;
        while t > 1.0 / 64.0 && merit(&next)? > m0 {
            t *= 0.5;
            next = &u + &step * t;
        }
        u = next;
    }
    Ok(None)
}

/// Runs `count` deflated Newton probes at fixed `λ` from random profiles of
/// sign `sign_factor` (±1), seeded by `seed`.
///
/// `u = 0` is always deflated, and every hit is deflated for later probes.
/// Hits whose limits coincide with a known solution are dropped.
pub fn deflated_probe(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    lam: f64,
    known: &[DVector<f64>],
    sign_factor: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<ProbeHit>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deflated: Vec<DVector<f64>> = vec![DVector::zeros(g.n)];
    deflated.extend(known.iter().cloned());
    let mut hits = Vec::new();
    for _ in 0..count {
        let start = profile(g, &mut rng, sign_factor.signum());
        let Some((u, r)) = deflated_newton(p, g, lam, start, &deflated, cfg.newton_tol)? else {
            continue;
        };
        if deflated.iter().any(|k| dist2(g, &u, k) < KNOWN_RADIUS2) {
            continue;
        }
        let sign = point_sign(&u, g, cfg);
        deflated.push(u.clone());
        hits.push(ProbeHit {
            lam,
            u,
            sign,
            residual: r,
        });
    }
    Ok(hits)
}
