//! The linearization `𝔏_d(λ) = dΔ + λ⟨a,∇⟩ + I`: closed-form spectrum,
//! principal eigenvalue of its symmetrized form, and finite-dimensional
//! multiplicity estimators for general matrix curves.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{SymTridiagonal, Tridiagonal};
use crate::problem::{linear_operator, ProblemParams};

/// Largest dimension accepted by the determinant-based multiplicity.
pub const ORD_DET_MAX_DIM: usize = 50;
/// Coefficients below this fraction of the largest one count as zero.
pub const DET_NOISE_RTOL: f64 = 1e-9;
/// Half-width (in points) of the determinant sampling stencil.
const ORD_DET_HALF_STENCIL: usize = 6;
const ORD_DET_SPACING: f64 = 0.05;
/// Ladder of offsets used by the resolvent-rate fit.
const KAPPA_LADDER: [f64; 7] = [
    1e-2,
    3.162_277_660_168_379_5e-3,
    1e-3,
    3.162_277_660_168_379_5e-4,
    1e-4,
    3.162_277_660_168_379_5e-5,
    1e-5,
];
const KAPPA_INTEGER_TOL: f64 = 0.2;

type CurveFn = dyn Fn(f64) -> DMatrix<f64> + Send + Sync;

/// Continuous map `λ ↦ m×m` matrix.
#[derive(Clone)]
pub struct MatrixCurve {
    eval: Arc<CurveFn>,
    dim: usize,
}

impl fmt::Debug for MatrixCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixCurve").field("dim", &self.dim).finish()
    }
}

impl MatrixCurve {
    pub fn new(dim: usize, eval: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, lam: f64) -> Result<DMatrix<f64>> {
        let m = (self.eval)(lam);
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.nrows().max(m.ncols()),
            });
        }
        Ok(m)
    }

    /// Pointwise product `λ ↦ self(λ)·other(λ)`.
    pub fn product(&self, other: &MatrixCurve) -> Result<MatrixCurve> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let (a, b) = (self.eval.clone(), other.eval.clone());
        Ok(MatrixCurve::new(self.dim, move |l| a(l) * b(l)))
    }

    /// `λ ↦ left · self(λ) · right` for constant matrices.
    pub fn sandwich(&self, left: DMatrix<f64>, right: DMatrix<f64>) -> MatrixCurve {
        let a = self.eval.clone();
        MatrixCurve::new(self.dim, move |l| &left * a(l) * &right)
    }

    pub fn identity(dim: usize) -> MatrixCurve {
        MatrixCurve::new(dim, move |_| DMatrix::identity(dim, dim))
    }
}

/// Dense `λ ↦ d·Lap + λ a·Grad + I` on the grid.
pub fn linearization_curve(p: &ProblemParams, g: &Grid) -> MatrixCurve {
    let lap = g.lap.to_dense() * p.d;
    let grad = g.grad.to_dense() * p.a[0];
    let n = g.n;
    MatrixCurve::new(n, move |l| &lap + &grad * l + DMatrix::identity(n, n))
}

/// Symmetric tridiagonal matrix similar to `𝔏_d(λ)` through the discrete
/// exponential weight. Fails once the cell Péclet number reaches one.
pub fn symmetrized_linearization(p: &ProblemParams, lam: f64, g: &Grid) -> Result<SymTridiagonal> {
    linear_operator(p, lam, g).symmetrized()
}

/// Principal (largest) eigenvalue `μ(λ)` of the linearization.
pub fn principal_eigenvalue(p: &ProblemParams, lam: f64, g: &Grid) -> Result<f64> {
    Ok(symmetrized_linearization(p, lam, g)?.largest_eigenvalue())
}

/// Largest `|λ|` for which the centered scheme stays symmetrizable.
pub fn peclet_limit(p: &ProblemParams, g: &Grid) -> f64 {
    2.0 * p.d / (p.abs_a() * g.h)
}

/// `λ₁(d) = (2/|a|)√(d(1−dσ₁))`, or `None` when `dσ₁ > 1`.
pub fn lambda1(d: f64, abs_a: f64, sigma1: f64) -> Option<f64> {
    let t = 1.0 - d * sigma1;
    if t < 0.0 {
        None
    } else {
        Some(2.0 / abs_a * (d * t).sqrt())
    }
}

/// Whether `(λ, d)` lies on `4d(1−σ₁d) = λ²|a|²` within `tol`.
pub fn on_spectrum_ellipse(lam: f64, d: f64, abs_a: f64, sigma1: f64, tol: f64) -> bool {
    (4.0 * d * (1.0 - sigma1 * d) - lam * lam * abs_a * abs_a).abs() <= tol
}

#[derive(Debug, Clone, Copy)]
pub enum PerturbedMode<'a> {
    ClosedForm,
    Numeric(&'a Grid),
}

/// Eigenvalue of `𝔏_d(λ)` perturbed from zero at `dσ₁ = 1`.
///
/// The numeric mode returns the principal eigenvalue of the discretized
/// operator, which is the one emanating from zero.
pub fn perturbed_eigenvalue(lam: f64, d: f64, abs_a: f64, mode: PerturbedMode<'_>) -> Result<f64> {
    match mode {
        PerturbedMode::ClosedForm => Ok(-lam * lam * abs_a * abs_a / (4.0 * d)),
        PerturbedMode::Numeric(g) => {
            let mut t: Tridiagonal = g.lap.combine(d, &g.grad, lam * abs_a);
            t.diag.iter_mut().for_each(|v| *v += 1.0);
            Ok(t.symmetrized()?.largest_eigenvalue())
        }
    }
}

/// Generalized algebraic multiplicity, finite or not resolvable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chi {
    Finite(u32),
    Infinite,
}

impl fmt::Display for Chi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Chi::Finite(k) => write!(f, "{k}"),
            Chi::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub lambda0: f64,
    pub kappa: Option<u32>,
    pub chi: Chi,
}

fn hadamard_bound(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.norm()).product()
}

/// Order of vanishing of `det c(λ)` at `λ₀`.
///
/// The determinant is sampled on a symmetric stencil and interpolated by a
/// polynomial in the scaled offset; the first coefficient above the noise
/// floor gives the order.
pub fn chi_ord_det(c: &MatrixCurve, lambda0: f64) -> Result<SpectrumPoint> {
    if c.dim() > ORD_DET_MAX_DIM {
        return Err(Error::Precondition(format!(
            "determinant path limited to dimension {ORD_DET_MAX_DIM}, got {}",
            c.dim()
        )));
    }
    let k = ORD_DET_HALF_STENCIL as i32;
    let m = (2 * k + 1) as usize;
    let mut dets = DVector::zeros(m);
    let mut all_small = true;
    for (row, j) in (-k..=k).enumerate() {
        let mat = c.eval(lambda0 + ORD_DET_SPACING * j as f64)?;
        let det = mat.clone().lu().determinant();
        if det.abs() > 1e-12 * hadamard_bound(&mat) {
            all_small = false;
        }
        dets[row] = det;
    }
    if all_small {
        return Ok(SpectrumPoint {
            lambda0,
            kappa: None,
            chi: Chi::Infinite,
        });
    }
    // Vandermonde system in s = t / spacing, s ∈ {−k..k}.
    let vander = DMatrix::from_fn(m, m, |r, col| ((r as i32 - k) as f64).powi(col as i32));
    let coeffs = vander
        .lu()
        .solve(&dets)
        .ok_or_else(|| Error::Singular("Vandermonde system".into()))?;
    let largest = coeffs.amax();
    let order = coeffs
        .iter()
        .position(|v| v.abs() > DET_NOISE_RTOL * largest)
        .unwrap_or(0) as u32;
    let kappa = if order == 0 {
        None
    } else {
        estimate_kappa(c, lambda0).ok().map(|f| f.kappa)
    };
    Ok(SpectrumPoint {
        lambda0,
        kappa,
        chi: Chi::Finite(order),
    })
}

/// Result of the resolvent-rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaFit {
    pub kappa: u32,
    pub slope: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

/// Fits `σ_min(c(λ₀ ± t)) ~ |t|^κ` over a geometric ladder of offsets.
pub fn estimate_kappa(c: &MatrixCurve, lambda0: f64) -> Result<KappaFit> {
    let mut xs = Vec::with_capacity(2 * KAPPA_LADDER.len());
    let mut ys = Vec::with_capacity(2 * KAPPA_LADDER.len());
    for &t in &KAPPA_LADDER {
        for side in [-1.0, 1.0] {
            let sv = c.eval(lambda0 + side * t)?.singular_values();
            let s = sv.min();
            if !(s > f64::EPSILON * sv.max()) {
                return Err(Error::Precondition(format!(
                    "curve is numerically singular at offset {:e}",
                    side * t
                )));
            }
            xs.push(t.ln());
            ys.push(s.ln());
        }
    }
    let nn = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / nn;
    let my = ys.iter().sum::<f64>() / nn;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / nn)
        .sqrt();
    let rounded = slope.round();
    if (slope - rounded).abs() > KAPPA_INTEGER_TOL || rounded < 1.0 {
        return Err(Error::NotAlgebraic(format!("fitted slope {slope:.4}")));
    }
    Ok(KappaFit {
        kappa: rounded as u32,
        slope,
        residual,
    })
}

/// Checks `χ[c1·c2, λ₀] = χ[c1, λ₀] + χ[c2, λ₀]`.
pub fn product_formula_check(c1: &MatrixCurve, c2: &MatrixCurve, lambda0: f64) -> Result<bool> {
    let prod = c1.product(c2)?;
    let (a, b, ab) = (
        chi_ord_det(c1, lambda0)?.chi,
        chi_ord_det(c2, lambda0)?.chi,
        chi_ord_det(&prod, lambda0)?.chi,
    );
    Ok(match (a, b, ab) {
        (Chi::Finite(x), Chi::Finite(y), Chi::Finite(z)) => x + y == z,
        _ => false,
    })
}

/// One entry of the built-in test-pencil suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PencilCheck {
    pub name: String,
    pub expected: Chi,
    pub found: Chi,
    pub pass: bool,
}

fn rank_one_projection(dim: usize) -> DMatrix<f64> {
    let v = DVector::from_fn(dim, |i, _| 1.0 + i as f64);
    let v = &v / v.norm();
    &v * v.transpose()
}

fn fixed_invertible(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            3.0 + i as f64
        } else {
            ((i * 7 + j * 3) % 5) as f64 * 0.25 - 0.5
        }
    })
}

/// Test pencils exercising the normalization and product axioms together
/// with diagonal, Jordan and similarity-invariance cases.
pub fn pencil_suite() -> Result<Vec<PencilCheck>> {
    let mut out = Vec::new();
    let mut push = |name: &str, curve: &MatrixCurve, lambda0: f64, expected: Chi| -> Result<()> {
        let found = chi_ord_det(curve, lambda0)?.chi;
        out.push(PencilCheck {
            name: name.to_string(),
            expected,
            found,
            pass: found == expected,
        });
        Ok(())
    };

    let diag = MatrixCurve::new(2, |l| DMatrix::from_row_slice(2, 2, &[l, 0.0, 0.0, 1.0]));
    let jordan = MatrixCurve::new(2, |l| DMatrix::from_row_slice(2, 2, &[l, 1.0, 0.0, l]));
    push("diag(l,1)", &diag, 0.0, Chi::Finite(1))?;
    push("jordan(l)", &jordan, 0.0, Chi::Finite(2))?;

    let lambda0 = 0.3;
    let proj = rank_one_projection(4);
    let np = {
        let proj = proj.clone();
        MatrixCurve::new(4, move |l| {
            &proj * (l - lambda0) + DMatrix::identity(4, 4) - &proj
        })
    };
    push("normalization", &np, lambda0, Chi::Finite(1))?;

    let prod = diag.product(&diag)?;
    push("product diag*diag", &prod, 0.0, Chi::Finite(2))?;
    let prod = jordan.product(&MatrixCurve::identity(2))?;
    push("product jordan*identity", &prod, 0.0, Chi::Finite(2))?;

    let regular = {
        let a = fixed_invertible(3);
        MatrixCurve::new(3, move |l| &a + DMatrix::from_diagonal_element(3, 3, l))
    };
    let sq = MatrixCurve::new(3, |l| {
        DMatrix::from_diagonal(&DVector::from_vec(vec![l * l, 1.0, 1.0]))
    });
    push(
        "regular*diag(l^2,1,1)",
        &regular.product(&sq)?,
        0.0,
        Chi::Finite(2),
    )?;
    push(
        "similarity invariance",
        &np.sandwich(fixed_invertible(4), fixed_invertible(4).transpose()),
        lambda0,
        Chi::Finite(1),
    )?;
    push("isomorphism", &regular, 0.0, Chi::Finite(0))?;
    let zero = MatrixCurve::new(2, |_| DMatrix::zeros(2, 2));
    push("identically singular", &zero, 0.0, Chi::Infinite)?;
    Ok(out)
}
