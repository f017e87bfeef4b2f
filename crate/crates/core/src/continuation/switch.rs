use serde::{Deserialize, Serialize};

use super::arclength::{expect_sign, seed_from};
use super::newton::{correct_fixed_x, newton_correct};
use super::{Bifurcation, ContinuationConfig, Origin, Seed, Tangency};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::problem::{ProblemParams, Sign};
use crate::reduction::{
    local_predictor, ls_coefficients, puiseux_branches, PredictorKind, PuiseuxBranch, Side,
};

/// Range of `|λ|` for Puiseux seeds.
const PUISEUX_LAMBDA_RANGE: (f64, f64) = (1e-4, 5e-2);
/// Accepted ratio between the corrected and the predicted `|x|`.
const PUISEUX_RATIO: (f64, f64) = (0.2, 5.0);

/// A seed that could not be produced, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub lambda0: f64,
    pub sign: Sign,
    pub reason: String,
}

fn side_sign(side: Side) -> Sign {
    match side {
        Side::Minus => Sign::Negative,
        _ => Sign::Positive,
    }
}

fn simple_seed(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    lambda0: f64,
    sign: Sign,
) -> Result<Seed> {
    let s = sign.factor() * cfg.seed_amplitude;
    let (lam, guess) = local_predictor(PredictorKind::CrandallRabinowitz { lambda0 }, s, p, g)?;
    let (lam, c) = correct_fixed_x(p, g, lam, &guess, s, cfg.newton_tol, cfg.newton_max_iter)?;
    let seed = seed_from(
        p,
        g,
        cfg,
        Origin::TrivialBifurcation { lambda0 },
        lam,
        c.u,
        c.iterations,
    )?;
    expect_sign(&seed.point, sign)?;
    Ok(seed)
}

fn puiseux_seed(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    lambda0: f64,
    germ: &PuiseuxBranch,
) -> Result<Seed> {
    let e = germ.exponent.to_f64();
    let lam_abs = (cfg.puiseux_seed_x / germ.coefficient)
        .powf(1.0 / e)
        .clamp(PUISEUX_LAMBDA_RANGE.0, PUISEUX_LAMBDA_RANGE.1);
    let lam = germ.lambda_side.factor() * lam_abs;
    let (lam, guess) = local_predictor(PredictorKind::Puiseux(*germ), lam, p, g)?;
    let predicted = germ.x_at(lam);
    let c = newton_correct(p, g, lam, &guess, cfg.newton_tol, cfg.newton_max_iter)?;
    let seed = seed_from(
        p,
        g,
        cfg,
        Origin::TrivialBifurcation { lambda0 },
        lam,
        c.u,
        c.iterations,
    )?;
    expect_sign(&seed.point, side_sign(germ.sign_of_x))?;
    let ratio = seed.point.x_proj / predicted;
    if !(ratio >= PUISEUX_RATIO.0 && ratio <= PUISEUX_RATIO.1) {
        return Err(Error::Precondition(format!(
            "corrected amplitude {:.3e} far from predicted {predicted:.3e}",
            seed.point.x_proj
        )));
    }
    Ok(seed)
}

/// Corrected starting points on the nontrivial branches leaving
/// `(bif.lambda0, 0)`.
///
/// A simple point yields one seed per sign at amplitude `±seed_amplitude`.
/// A quadratic tangency yields one seed per Puiseux germ of the reduced
/// equation. Seeds that fail to correct are reported individually.
pub fn branch_switch(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    bif: &Bifurcation,
) -> Vec<std::result::Result<Seed, SeedFailure>> {
    let fail = |sign: Sign, err: Error| SeedFailure {
        lambda0: bif.lambda0,
        sign,
        reason: err.to_string(),
    };
    match bif.tangency {
        Tangency::Simple => [Sign::Positive, Sign::Negative]
            .into_iter()
            .map(|sign| simple_seed(p, g, cfg, bif.lambda0, sign).map_err(|e| fail(sign, e)))
            .collect(),
        Tangency::Quadratic => {
            let germs = ls_coefficients(p, g).and_then(|rc| puiseux_branches(&rc));
            match germs {
                Ok(germs) => germs
                    .iter()
                    .map(|germ| {
                        puiseux_seed(p, g, cfg, bif.lambda0, germ)
                            .map_err(|e| fail(side_sign(germ.sign_of_x), e))
                    })
                    .collect(),
                Err(e) => [Sign::Positive, Sign::Negative]
                    .into_iter()
                    .map(|sign| Err(fail(sign, e.clone())))
                    .collect(),
            }
        }
    }
}
