//! Branch tracing: Newton correction, pseudo-arclength stepping, detection of
//! bifurcations from `u = 0`, branch switching, germ sampling, continuation
//! in `d` and deflated searches.

mod arclength;
mod deflation;
mod detect;
mod germs;
mod homotopy;
mod newton;
mod switch;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::problem::{classify_sign, ProblemParams, SignClass};

pub use arclength::{arclength_step, initial_tangent, trace_branch, StepOutcome};
pub use deflation::{deflated_probe, ProbeHit};
pub use detect::{detect_trivial_bifurcations, Bifurcation, Tangency};
pub use germs::{fit_germ, GermFit, GERM_SAMPLE_RANGE};
pub use homotopy::{continue_in_d, isola_seed_candidates, DContinuation};
pub use newton::{correct_fixed_x, newton_correct, Corrected};
pub use switch::{branch_switch, SeedFailure};

/// Tunables of the tracer. Defaults follow the library conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationConfig {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub ds_min: f64,
    pub ds_max: f64,
    pub ds_init: f64,
    /// Weight of the λ-axis in the scaled arclength metric.
    pub w_lambda: f64,
    pub grow: f64,
    /// Corrector iteration count at or below which the step grows.
    pub fast_iters: usize,
    pub trivial_threshold: f64,
    pub closure_tol: f64,
    pub max_steps: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub window_margin: f64,
    /// Amplitude `x = ⟨u,φ₀⟩` of simple-bifurcation seeds.
    pub seed_amplitude: f64,
    /// Target `|x|` for Puiseux seeds; the seed λ is chosen to match it.
    pub puiseux_seed_x: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max_iter: 25,
            ds_min: 1e-4,
            ds_max: 5e-2,
            ds_init: 1e-3,
            w_lambda: 0.5,
            grow: 1.3,
            fast_iters: 3,
            trivial_threshold: 1e-4,
            closure_tol: 1e-3,
            max_steps: 5000,
            lambda_min: -4.0,
            lambda_max: 4.0,
            window_margin: 0.0,
            seed_amplitude: 1e-2,
            puiseux_seed_x: 3e-2,
        }
    }
}

impl ContinuationConfig {
    pub fn min_loop_length(&self) -> f64 {
        10.0 * self.ds_max
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("ds_min", self.ds_min),
            ("ds_max", self.ds_max),
            ("ds_init", self.ds_init),
            ("trivial_threshold", self.trivial_threshold),
            ("closure_tol", self.closure_tol),
            ("seed_amplitude", self.seed_amplitude),
            ("puiseux_seed_x", self.puiseux_seed_x),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.w_lambda > 0.0 && self.w_lambda < 1.0) {
            return Err(Error::InvalidParameter("w_lambda must lie in (0, 1)".into()));
        }
        if !(self.ds_min <= self.ds_init && self.ds_init <= self.ds_max) {
            return Err(Error::InvalidParameter("need ds_min <= ds_init <= ds_max".into()));
        }
        if !(self.lambda_min < self.lambda_max) {
            return Err(Error::InvalidParameter("empty λ window".into()));
        }
        if self.grow < 1.0 || self.newton_max_iter == 0 || self.max_steps == 0 {
            return Err(Error::InvalidParameter("bad step control settings".into()));
        }
        Ok(())
    }

    /// Scaled inner product `w·a·b + (1−w)·⟨u,v⟩/n`.
    pub fn inner(&self, a: &Tangent, b: &Tangent) -> f64 {
        let n = a.du.len() as f64;
        self.w_lambda * a.dlam * b.dlam + (1.0 - self.w_lambda) * a.du.dot(&b.du) / n
    }

    pub fn norm(&self, a: &Tangent) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// Scaled distance between two states.
    pub fn distance(&self, lam_a: f64, u_a: &DVector<f64>, lam_b: f64, u_b: &DVector<f64>) -> f64 {
        self.norm(&Tangent {
            dlam: lam_a - lam_b,
            du: u_a - u_b,
        })
    }
}

/// Direction `(dλ, du)`, unit length in the scaled metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub dlam: f64,
    pub du: DVector<f64>,
}

impl Tangent {
    pub fn scaled(&self, f: f64) -> Tangent {
        Tangent {
            dlam: self.dlam * f,
            du: &self.du * f,
        }
    }
}

/// One converged state on a branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub lam: f64,
    pub u: DVector<f64>,
    /// `x = ⟨u, φ₀⟩`.
    pub x_proj: f64,
    pub sup_norm: f64,
    pub tangent: Tangent,
    pub sign: SignClass,
    pub newton_iters: usize,
    /// Accumulated arclength from the branch start.
    pub s: f64,
}

impl BranchPoint {
    /// Builds a point, filling the derived fields.
    pub fn new(
        p: &ProblemParams,
        g: &Grid,
        cfg: &ContinuationConfig,
        lam: f64,
        u: DVector<f64>,
        tangent: Tangent,
        newton_iters: usize,
    ) -> Self {
        let sup_norm = u.amax();
        let sign = point_sign(&u, g, cfg);
        Self {
            lam,
            x_proj: g.inner(&u, &p.phi0),
            sup_norm,
            tangent,
            sign,
            newton_iters,
            u,
            s: 0.0,
        }
    }

    /// Sup norm carrying the sign of the solution.
    pub fn signed_norm(&self) -> f64 {
        match self.sign {
            SignClass::StrictlyNegative => -self.sup_norm,
            SignClass::Mixed if self.u.sum() < 0.0 => -self.sup_norm,
            _ => self.sup_norm,
        }
    }
}

/// Sign class used by the tracer: trivial below the threshold, otherwise the
/// strong-positivity classifier with a relative tolerance.
pub fn point_sign(u: &DVector<f64>, g: &Grid, cfg: &ContinuationConfig) -> SignClass {
    let sup = u.amax();
    if sup < cfg.trivial_threshold {
        SignClass::Trivial
    } else {
        classify_sign(u, g, 1e-9 * sup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Origin {
    TrivialBifurcation { lambda0: f64 },
    DHomotopySeed { d_from: f64 },
    UserSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    ReturnedToTrivial {
        lambda_end: f64,
    },
    /// Came back to its own start; `defect` is the scaled closing distance.
    LoopClosed {
        defect: f64,
    },
    WindowExit {
        lambda_exit: f64,
    },
    MaxSteps,
    NewtonFailure {
        reason: String,
    },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::ReturnedToTrivial { .. } => "returned_to_trivial",
            Termination::LoopClosed { .. } => "loop_closed",
            Termination::WindowExit { .. } => "window_exit",
            Termination::MaxSteps => "max_steps",
            Termination::NewtonFailure { .. } => "newton_failure",
        }
    }
}

/// A corrected starting point with its initial tangent.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub origin: Origin,
    pub point: BranchPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub origin: Origin,
    pub termination: Termination,
    pub arclength: f64,
}

impl Branch {
    /// Sign shared by the non-trivial points, if any.
    pub fn sign(&self) -> Option<crate::problem::Sign> {
        self.points.iter().find_map(|pt| pt.sign.sign())
    }

    pub fn lambda_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), pt| {
                (lo.min(pt.lam), hi.max(pt.lam))
            })
    }

    pub fn min_sup(&self) -> f64 {
        self.points
            .iter()
            .map(|pt| pt.sup_norm)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_sup(&self) -> f64 {
        self.points.iter().map(|pt| pt.sup_norm).fold(0.0, f64::max)
    }

    /// Same branch traversed backwards.
    pub fn reversed(&self) -> Branch {
        let mut b = self.clone();
        b.points.reverse();
        let total = self.arclength;
        for pt in &mut b.points {
            pt.s = total - pt.s;
            pt.tangent = pt.tangent.scaled(-1.0);
        }
        b
    }
}
