use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::newton::{correct_fixed_x, newton_correct};
use super::ContinuationConfig;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::problem::ProblemParams;
use crate::reduction::{fit_power_law, PowerLawFit, PuiseuxBranch};

/// Geometric sampling range near the vertex, in `|x|` for germs with
/// exponent below one and in `|λ|` otherwise.
pub const GERM_SAMPLE_RANGE: (f64, f64) = (1e-3, 1e-2);
const GERM_SAMPLES: usize = 9;

/// Solutions sampled along one germ and the power law fitted to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermFit {
    pub germ: PuiseuxBranch,
    /// `(λ, x)` pairs.
    pub samples: Vec<(f64, f64)>,
    pub fit: PowerLawFit,
}

/// Samples the nontrivial solutions along `germ` near `(0, 0)` and fits
/// `|x| = c·|λ|^e` to them.
///
/// Germs steeper than linear in `λ` are sampled at fixed `x`, the others at
/// fixed `λ`, so that each sample is a regular solve. Samples that land on
/// the wrong side or with the wrong sign are an error.
pub fn fit_germ(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    germ: &PuiseuxBranch,
) -> Result<GermFit> {
    let e = germ.exponent.to_f64();
    let (lo, hi) = GERM_SAMPLE_RANGE;
    let mut samples = Vec::with_capacity(GERM_SAMPLES);
    // March from the outer end inwards, scaling the previous solution as the
    // next guess, so every solve stays on the same germ.
    let mut prev: Option<(f64, DVector<f64>, f64)> = None;
    for k in (0..GERM_SAMPLES).rev() {
        let t = lo * (hi / lo).powf(k as f64 / (GERM_SAMPLES - 1) as f64);
        let (lam, x, u) = if e < 1.0 {
            let x = germ.sign_of_x.factor() * t;
            let (lam_guess, guess) = match &prev {
                Some((l, u, tp)) => (l * (t / tp).powf(1.0 / e), u * (t / tp)),
                None => (
                    germ.lambda_side.factor() * (t / germ.coefficient).powf(1.0 / e),
                    &p.phi0 * x,
                ),
            };
            let (lam, c) = correct_fixed_x(p, g, lam_guess, &guess, x, cfg.newton_tol, cfg.newton_max_iter)?;
            (lam, x, c.u)
        } else {
            let lam = germ.lambda_side.factor() * t;
            let guess = match &prev {
                Some((_, u, tp)) => u * (t / tp).powf(e),
                None => &p.phi0 * germ.x_at(lam),
            };
            let c = newton_correct(p, g, lam, &guess, cfg.newton_tol, cfg.newton_max_iter)?;
            (lam, g.inner(&c.u, &p.phi0), c.u)
        };
        if !germ.admits(lam) || x * germ.sign_of_x.factor() <= 0.0 {
            return Err(Error::Precondition(format!(
                "sample (λ = {lam:e}, x = {x:e}) left the germ"
            )));
        }
        samples.push((lam, x));
        prev = Some((lam, u, t));
    }
    samples.reverse();
    let fit = fit_power_law(&samples)?;
    Ok(GermFit {
        germ: *germ,
        samples,
        fit,
    })
}
