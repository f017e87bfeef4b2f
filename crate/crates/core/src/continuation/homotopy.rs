use nalgebra::DVector;

use super::arclength::initial_tangent;
use super::newton::newton_correct;
use super::{Branch, BranchPoint, ContinuationConfig};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::condition_estimate;
use crate::problem::{jacobian_u, ProblemParams};

/// Largest Jacobian condition estimate accepted at the start of a homotopy.
pub const MAX_START_CONDITION: f64 = 1e8;
/// Condition estimate along the path beyond which a fold is assumed.
const FOLD_CONDITION: f64 = 1e11;
/// Result of continuing a solution in `d` at fixed `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DContinuation {
    /// Last converged state, evaluated with the diffusion it was reached at.
    pub point: BranchPoint,
    /// Diffusion reached, equal to the target when `completed`.
    pub d_achieved: f64,
    pub completed: bool,
    /// `(d, ‖u‖∞)` after every accepted step.
    pub path: Vec<(f64, f64)>,
}

/// Natural continuation of `𝔉(λ, u; d) = 0` from `p.d` to `d_target`,
/// starting with `steps` equal increments.
///
/// The predictor is the tangent `∂u/∂d = −J_u⁻¹ Δ_h u`. When the step size
/// collapses or the Jacobian becomes near singular the path is taken to have
/// met a fold and the last converged state is returned with
/// `completed = false`.
pub fn continue_in_d(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    point: &BranchPoint,
    d_target: f64,
    steps: usize,
) -> Result<DContinuation> {
    if !(d_target > 0.0 && d_target.is_finite()) || steps == 0 {
        return Err(Error::InvalidParameter(format!(
            "target diffusion {d_target} with {steps} steps"
        )));
    }
    let lam = point.lam;
    let start = newton_correct(p, g, lam, &point.u, cfg.newton_tol, cfg.newton_max_iter)?;
    let cond = condition_estimate(&jacobian_u(p, lam, &start.u, g)?)?;
    if !(cond < MAX_START_CONDITION) {
        return Err(Error::Precondition(format!(
            "Jacobian condition estimate {cond:.3e} too large to start a homotopy"
        )));
    }

    let span = d_target - p.d;
    let min_step = 1e-6 * span.abs().max(1e-12);
    let mut d = p.d;
    let mut u = start.u;
    let mut step = span / steps as f64;
    let mut path = vec![(d, u.amax())];
    let finish = |d: f64, u: DVector<f64>, completed: bool, path: Vec<(f64, f64)>| {
        let here = p.with_d(d)?;
        let tangent = initial_tangent(&here, g, cfg, lam, &u)?;
        Ok(DContinuation {
            point: BranchPoint::new(&here, g, cfg, lam, u, tangent, 0),
            d_achieved: d,
            completed,
            path,
        })
    };
    if span == 0.0 {
        return Ok(DContinuation {
            point: point.clone(),
            d_achieved: d,
            completed: true,
            path,
        });
    }
    while (d_target - d).abs() > 1e-14 * d_target {
        if step.abs() < min_step {
            return finish(d, u, false, path);
        }
        let dd = if (d + step - d_target) * span.signum() > 0.0 {
            d_target - d
        } else {
            step
        };
        let here = p.with_d(d)?;
        let ju = jacobian_u(&here, lam, &u, g)?;
        let rhs = -(g.lap.mul_vec(&u)?);
        let du = match ju.factor().and_then(|lu| lu.solve(&rhs)) {
            Ok(du) => du,
            Err(_) => {
                step *= 0.5;
                continue;
            }
        };
        let next = p.with_d(d + dd)?;
        let guess = &u + du * dd;
        match newton_correct(&next, g, lam, &guess, cfg.newton_tol, cfg.newton_max_iter) {
            Ok(c) if jumped(&u, &c.u, cfg) => step *= 0.5,
            Ok(c) => {
                let cond = condition_estimate(&jacobian_u(&next, lam, &c.u, g)?)?;
                if !(cond < FOLD_CONDITION) {
                    step *= 0.5;
                    continue;
                }
                d += dd;
                u = c.u;
                path.push((d, u.amax()));
                if c.iterations <= cfg.fast_iters {
                    step *= 1.5;
                }
            }
            Err(_) => step *= 0.5,
        }
    }
    finish(d_target, u, true, path)
}

/// True when the corrector left the solution family, e.g. fell onto `u = 0`
/// past a fold.
fn jumped(prev: &DVector<f64>, next: &DVector<f64>, cfg: &ContinuationConfig) -> bool {
    let (a, b) = (prev.amax(), next.amax());
    b < cfg.trivial_threshold || (a - b).abs() > 0.5 * a || (next - prev).amax() > 0.5 * a
}

/// Indices of points on `branch` suited to start a homotopy in `d`: large
/// amplitude and far from folds in `λ`, best first.
pub fn isola_seed_candidates(branch: &Branch) -> Vec<usize> {
    let top = branch.max_sup();
    let mut idx: Vec<usize> = (0..branch.points.len())
        .filter(|&i| branch.points[i].sup_norm >= 0.5 * top && top > 0.0)
        .collect();
    idx.sort_by(|&a, &b| {
        let ta = branch.points[a].tangent.dlam.abs();
        let tb = branch.points[b].tangent.dlam.abs();
        tb.total_cmp(&ta).then(a.cmp(&b))
    });
    idx
}
