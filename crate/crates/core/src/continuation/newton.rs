use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{condition_estimate, solve_bordered, SINGULAR_RTOL};
use crate::problem::{jacobian_lambda, jacobian_u, residual, ProblemParams};

/// Residual magnitude above which an iteration is declared divergent.
const DIVERGENCE: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub u: DVector<f64>,
    pub iterations: usize,
    /// Final `‖𝔉‖∞`.
    pub residual: f64,
}

pub(crate) fn converged(r: f64, tol: f64) -> bool {
    r <= tol
}

/// Newton's method at fixed `λ`, stopping once `‖𝔉‖∞ ≤ tol`.
///
/// The Jacobian is factored before the residual test, so a singular Jacobian
/// is reported even when the guess already solves the equation.
pub fn newton_correct(
    p: &ProblemParams,
    g: &Grid,
    lam: f64,
    guess: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Corrected> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(
            "Newton tolerance must be positive".into(),
        ));
    }
    let mut u = guess.clone();
    for it in 0..=max_iter {
        let f = residual(p, lam, &u, g)?;
        let j = jacobian_u(p, lam, &u, g)?;
        let lu = j.factor()?;
        // Small pivots can hide a singular matrix, so also check the condition.
        let cond = condition_estimate(&j)?;
        if !(cond < 1.0 / SINGULAR_RTOL) {
            return Err(Error::Singular(format!("Jacobian condition estimate {cond:.3e}")));
        }
        let r = f.amax();
        if converged(r, tol) {
            return Ok(Corrected {
                u,
                iterations: it,
                residual: r,
            });
        }
        if !r.is_finite() || r > DIVERGENCE {
            break;
        }
        if it == max_iter {
            break;
        }
        u -= lu.solve(&f)?;
    }
    Err(Error::NoConvergence {
        what: "Newton",
        iterations: max_iter,
    })
}

/// Newton's method on `𝔉(λ,u) = 0, ⟨u,φ₀⟩ = x` in the unknowns `(λ, u)`.
pub fn correct_fixed_x(
    p: &ProblemParams,
    g: &Grid,
    lam_guess: f64,
    u_guess: &DVector<f64>,
    x: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Corrected)> {
    let mut lam = lam_guess;
    let mut u = u_guess.clone();
    let row = &p.phi0 * g.h;
    for it in 0..=max_iter {
        let f = residual(p, lam, &u, g)?;
        let constraint = row.dot(&u) - x;
        let r = f.amax();
        if converged(r, tol) && constraint.abs() <= tol * (1.0 + x.abs()) {
            return Ok((
                lam,
                Corrected {
                    u,
                    iterations: it,
                    residual: r,
                },
            ));
        }
        if !r.is_finite() || r > DIVERGENCE || it == max_iter {
            break;
        }
        let ju = jacobian_u(p, lam, &u, g)?;
        let jl = jacobian_lambda(p, lam, &u, g)?;
        let (du, dl) = solve_bordered(&ju, &jl, &row, 0.0, &(-f), -constraint)?;
        u += du;
        lam += dl;
    }
    Err(Error::NoConvergence {
        what: "fixed-amplitude Newton",
        iterations: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Interval;
    use crate::pencil::lambda1;

    #[test]
    fn trivial_guess_needs_no_iterations() {
        let g = Grid::build(50, Interval::default()).unwrap();
        let p = ProblemParams::new(0.25, 5, vec![1.0], &g).unwrap();
        let c = newton_correct(&p, &g, 0.3, &DVector::zeros(g.n), 1e-10, 25).unwrap();
        assert_eq!(c.iterations, 0);
        assert_eq!(c.u.amax(), 0.0);
    }

    #[test]
    fn singular_jacobian_at_bifurcation() {
        let g = Grid::build(50, Interval::default()).unwrap();
        let p = ProblemParams::new(0.25, 5, vec![1.0], &g).unwrap();
        let bifs = crate::continuation::detect_trivial_bifurcations(&p, &g, (-2.0, 2.0), 0.01);
        let lam = bifs.iter().map(|b| b.lambda0).fold(f64::NEG_INFINITY, f64::max);
        assert!((lam - lambda1(0.25, 1.0, p.sigma1).unwrap()).abs() < 1e-3);
        let err = newton_correct(&p, &g, lam, &DVector::zeros(g.n), 1e-10, 25).unwrap_err();
        assert!(matches!(err, Error::Singular(_)), "{err:?}");
    }

    #[test]
    fn positive_solution_at_zero_lambda() {
        let g = Grid::build(200, Interval::default()).unwrap();
        let p = ProblemParams::new(0.25, 5, vec![1.0], &g).unwrap();
        let guess = &p.phi0 * (0.8 / p.phi0.amax());
        let c = newton_correct(&p, &g, 0.0, &guess, 1e-10, 25).unwrap();
        assert!(c.u.iter().all(|v| *v > 0.0));
        assert!(residual(&p, 0.0, &c.u, &g).unwrap().amax() < 1e-10);
    }

    #[test]
    fn fixed_amplitude_correction() {
        let g = Grid::build(100, Interval::default()).unwrap();
        let p = ProblemParams::new(0.25, 5, vec![1.0], &g).unwrap();
        let l1 = lambda1(0.25, 1.0, p.sigma1).unwrap();
        let (lam, c) = correct_fixed_x(&p, &g, l1, &(&p.phi0 * 0.01), 0.01, 1e-11, 25).unwrap();
        assert!((g.inner(&c.u, &p.phi0) - 0.01).abs() < 1e-10);
        assert!((lam - l1).abs() < 0.05);
    }
}
