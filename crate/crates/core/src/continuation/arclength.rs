use nalgebra::DVector;

use super::newton::converged;
use super::{Branch, BranchPoint, ContinuationConfig, Origin, Seed, Tangent, Termination};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::solve_bordered;
use crate::problem::{jacobian_lambda, jacobian_u, residual, ProblemParams, Sign};

/// Smallest cosine accepted between consecutive tangents.
const MIN_TANGENT_COS: f64 = 0.5;
/// Relative and absolute size of the final corrector update, per unknown.
const UPDATE_RTOL: f64 = 1e-6;
const UPDATE_ATOL: f64 = 1e-15;
/// Step floor, relative to `ds_min`, when retrying steps that changed sign.
const SIGN_RETRY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub point: BranchPoint,
    pub iterations: usize,
}

fn normalize(cfg: &ContinuationConfig, dlam: f64, du: DVector<f64>) -> Result<Tangent> {
    let t = Tangent { dlam, du };
    let norm = cfg.norm(&t);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Singular("degenerate tangent".into()));
    }
    Ok(t.scaled(1.0 / norm))
}

/// Tangent with unit growth of `x = ⟨u,φ₀⟩`, flipped so that `|x|` grows
/// when `u` is nonzero.
pub fn initial_tangent(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    lam: f64,
    u: &DVector<f64>,
) -> Result<Tangent> {
    let ju = jacobian_u(p, lam, u, g)?;
    let jl = jacobian_lambda(p, lam, u, g)?;
    let row = &p.phi0 * g.h;
    let (du, dl) = solve_bordered(&ju, &jl, &row, 0.0, &DVector::zeros(g.n), 1.0)?;
    let t = normalize(cfg, dl, du)?;
    let x = g.inner(u, &p.phi0);
    Ok(if x < 0.0 { t.scaled(-1.0) } else { t })
}

/// Kernel direction of `[J_u J_λ]` oriented along `prev`.
fn next_tangent(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    lam: f64,
    u: &DVector<f64>,
    prev: &Tangent,
) -> Result<Tangent> {
    let ju = jacobian_u(p, lam, u, g)?;
    let jl = jacobian_lambda(p, lam, u, g)?;
    let c = &prev.du * ((1.0 - cfg.w_lambda) / g.n as f64);
    let e = cfg.w_lambda * prev.dlam;
    let (du, dl) = solve_bordered(&ju, &jl, &c, e, &DVector::zeros(g.n), 1.0)?;
    normalize(cfg, dl, du)
}

/// One pseudo-arclength predictor–corrector step of length `ds`.
pub fn arclength_step(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    current: &BranchPoint,
    ds: f64,
) -> Result<StepOutcome> {
    if !(ds > 0.0 && ds <= cfg.ds_max * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!("step {ds} outside (0, ds_max]")));
    }
    let t = &current.tangent;
    let w = cfg.w_lambda;
    let cu = &t.du * ((1.0 - w) / g.n as f64);
    let e = w * t.dlam;

    let mut lam = current.lam + ds * t.dlam;
    let mut u = &current.u + &t.du * ds;
    let mut last_r = f64::INFINITY;
    let mut last_update = (f64::INFINITY, f64::INFINITY);
    let mut prev_update = last_update;
    for it in 0..=cfg.newton_max_iter {
        let f = residual(p, lam, &u, g)?;
        let constraint = e * (lam - current.lam) + cu.dot(&(&u - &current.u)) - ds;
        let r = f.amax();
        // Near u = 0 the residual is tiny for any nearby state, so the last
        // update must also be small relative to the state, or have stopped
        // contracting at the rounding floor.
        let small = last_update.0 <= UPDATE_RTOL * u.amax() + UPDATE_ATOL
            && last_update.1 <= UPDATE_RTOL * lam.abs() + UPDATE_ATOL;
        let stalled = it >= 2 && last_update.0 >= 0.5 * prev_update.0 && last_update.1 >= 0.5 * prev_update.1;
        let settled = small || stalled;
        if it > 0 && settled && converged(r, cfg.newton_tol) && constraint.abs() <= 1e-10 * ds {
            let tangent = next_tangent(p, g, cfg, lam, &u, t)?;
            let cos = cfg.inner(&tangent, t);
            if cos < MIN_TANGENT_COS {
                return Err(Error::Precondition(format!(
                    "tangent turned too far (cos = {cos:.3})"
                )));
            }
            let mut point = BranchPoint::new(p, g, cfg, lam, u, tangent, it);
            point.s = current.s + ds;
            return Ok(StepOutcome {
                point,
                iterations: it,
            });
        }
        if !r.is_finite() || (it >= 3 && r > last_r) {
            break;
        }
        last_r = r;
        if it == cfg.newton_max_iter {
            break;
        }
        let ju = jacobian_u(p, lam, &u, g)?;
        let jl = jacobian_lambda(p, lam, &u, g)?;
        let (du, dl) = solve_bordered(&ju, &jl, &cu, e, &(-f), -constraint)?;
        prev_update = last_update;
        last_update = (du.amax(), dl.abs());
        u += du;
        lam += dl;
    }
    Err(Error::NoConvergence {
        what: "arclength corrector",
        iterations: cfg.newton_max_iter,
    })
}

fn trivial_distance(cfg: &ContinuationConfig, u: &DVector<f64>) -> f64 {
    ((1.0 - cfg.w_lambda) * u.norm_squared() / u.len() as f64).sqrt()
}

/// λ where the chord through the last two points meets `x = 0`.
fn extrapolate_to_trivial(prev: &BranchPoint, last: &BranchPoint) -> f64 {
    let dx = prev.x_proj - last.x_proj;
    if dx.abs() < f64::MIN_POSITIVE {
        return last.lam;
    }
    last.lam - last.x_proj * (prev.lam - last.lam) / dx
}

/// Traces a branch from a corrected seed until it returns to `u = 0`,
/// closes on itself, leaves the λ-window, fails, or runs out of steps.
pub fn trace_branch(p: &ProblemParams, g: &Grid, cfg: &ContinuationConfig, seed: &Seed) -> Branch {
    let start = seed.point.clone();
    let mut points = vec![start.clone()];
    let finish = |points: Vec<BranchPoint>, termination: Termination| {
        let arclength = points.last().map(|pt| pt.s).unwrap_or(0.0);
        Branch {
            points,
            origin: seed.origin,
            termination,
            arclength,
        }
    };
    let Some(sign) = start.sign.sign() else {
        return finish(
            points,
            Termination::NewtonFailure {
                reason: format!("seed has sign class {:?}", start.sign),
            },
        );
    };
    let seed_origin_lambda = match seed.origin {
        Origin::TrivialBifurcation { lambda0 } => Some(lambda0),
        _ => None,
    };
    let returns_to_seed = !matches!(seed.origin, Origin::TrivialBifurcation { .. });
    let (wlo, whi) = (
        cfg.lambda_min - cfg.window_margin,
        cfg.lambda_max + cfg.window_margin,
    );

    let mut ds = cfg.ds_init;
    for _ in 0..cfg.max_steps {
        let cur = points.last().expect("nonempty").clone();
        let mut ds_eff = ds
            .min(0.5 * trivial_distance(cfg, &cur.u))
            .max(ds.min(cfg.ds_min));
        let mut closing = false;
        if returns_to_seed && cur.s >= cfg.min_loop_length() {
            let gap = cfg.distance(cur.lam, &cur.u, start.lam, &start.u);
            if gap < ds_eff + cfg.closure_tol {
                let ahead = cfg.inner(
                    &Tangent {
                        dlam: start.lam - cur.lam,
                        du: &start.u - &cur.u,
                    },
                    &cur.tangent,
                );
                if ahead > 0.0 {
                    ds_eff = ahead.min(cfg.ds_max);
                    closing = true;
                }
            }
        }

        match arclength_step(p, g, cfg, &cur, ds_eff) {
            Ok(out) => {
                let new = out.point;
                if new.sup_norm < cfg.trivial_threshold {
                    let lambda_end = extrapolate_to_trivial(&cur, &new);
                    let termination = match seed_origin_lambda {
                        Some(l0) => {
                            let defect = cfg.distance(new.lam, &new.u, l0, &DVector::zeros(g.n));
                            if defect <= cfg.closure_tol && new.s >= cfg.min_loop_length() {
                                Termination::LoopClosed { defect }
                            } else {
                                Termination::ReturnedToTrivial { lambda_end }
                            }
                        }
                        None => Termination::ReturnedToTrivial { lambda_end },
                    };
                    points.push(new);
                    return finish(points, termination);
                }
                if new.sign.sign() != Some(sign) {
                    ds = 0.5 * ds_eff;
                    if ds < SIGN_RETRY_FLOOR * cfg.ds_min {
                        return finish(
                            points,
                            Termination::NewtonFailure {
                                reason: format!("sign class changed to {:?}", new.sign),
                            },
                        );
                    }
                    continue;
                }
                let fast = out.iterations <= cfg.fast_iters;
                let lam = new.lam;
                points.push(new);
                if lam < wlo || lam > whi {
                    return finish(points, Termination::WindowExit { lambda_exit: lam });
                }
                if closing {
                    let last = points.last().expect("nonempty");
                    let defect = cfg.distance(last.lam, &last.u, start.lam, &start.u);
                    if defect <= cfg.closure_tol {
                        return finish(points, Termination::LoopClosed { defect });
                    }
                }
                ds = if fast {
                    (ds_eff * cfg.grow).min(cfg.ds_max)
                } else {
                    ds_eff
                };
                ds = ds.max(cfg.ds_min);
            }
            Err(err) => {
                ds = 0.5 * ds_eff;
                if ds < cfg.ds_min {
                    return finish(
                        points,
                        Termination::NewtonFailure {
                            reason: err.to_string(),
                        },
                    );
                }
            }
        }
    }
    finish(points, Termination::MaxSteps)
}

pub(crate) fn seed_from(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    origin: Origin,
    lam: f64,
    u: DVector<f64>,
    iterations: usize,
) -> Result<Seed> {
    let tangent = initial_tangent(p, g, cfg, lam, &u)?;
    let point = BranchPoint::new(p, g, cfg, lam, u, tangent, iterations);
    Ok(Seed { origin, point })
}

pub(crate) fn expect_sign(point: &BranchPoint, sign: Sign) -> Result<()> {
    if point.sign.sign() == Some(sign) {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "corrected seed has sign class {:?}, expected {sign:?}",
            point.sign
        )))
    }
}
