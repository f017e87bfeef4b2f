//! Problem definition: residual of `dΔu + λ⟨a,∇u⟩ + u + λu² − u^q` with
//! Dirichlet conditions, its derivatives, the exponential change of variables
//! and the closed-form a priori bounds and λ-windows.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Interval};
use crate::linalg::Tridiagonal;

/// Requested diffusions with `|dσ₁ − 1|` below this are moved onto the
/// discrete critical value `1/σ₁` of the mesh.
pub const CRITICAL_SNAP_TOL: f64 = 1e-3;

/// Tolerance on `dσ₁ − 1` used to decide the regime once snapping is done.
pub const REGIME_TOL: f64 = 1e-12;

const WINDOW_MAX_ITER: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Positive => '+',
            Sign::Negative => '-',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignClass {
    StrictlyPositive,
    StrictlyNegative,
    Trivial,
    Mixed,
}

impl SignClass {
    pub fn sign(self) -> Option<Sign> {
        match self {
            SignClass::StrictlyPositive => Some(Sign::Positive),
            SignClass::StrictlyNegative => Some(Sign::Negative),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignClass::StrictlyPositive => "positive",
            SignClass::StrictlyNegative => "negative",
            SignClass::Trivial => "trivial",
            SignClass::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(SignClass::StrictlyPositive),
            "negative" => Some(SignClass::StrictlyNegative),
            "trivial" => Some(SignClass::Trivial),
            "mixed" => Some(SignClass::Mixed),
            _ => None,
        }
    }
}

/// Position of `d` relative to the critical diffusion `1/σ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToSelfAdjoint,
    FromSelfAdjoint,
}

/// Immutable problem identity plus the cached principal eigenpair.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    pub d: f64,
    /// Diffusion as requested before critical snapping.
    pub d_requested: f64,
    pub q: u32,
    pub a: Vec<f64>,
    pub domain: Interval,
    pub sigma1: f64,
    pub phi0: DVector<f64>,
}

impl ProblemParams {
    /// Builds the parameters on `grid`, computing `(σ₁, φ₀)` from the mesh.
    ///
    /// A diffusion within [`CRITICAL_SNAP_TOL`] of `1/σ₁` is replaced by the
    /// discrete critical value so that the degenerate regime is hit exactly.
    pub fn new(d: f64, q: u32, a: Vec<f64>, grid: &Grid) -> Result<Self> {
        let (sigma1, phi0) = grid.principal_eigenpair()?;
        let mut p = Self::with_spectrum(d, q, a, grid.interval, sigma1, phi0)?;
        if (d * sigma1 - 1.0).abs() <= CRITICAL_SNAP_TOL {
            p.d = 1.0 / sigma1;
        }
        if p.a.len() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                found: p.a.len(),
            });
        }
        Ok(p)
    }

    /// Builds the parameters from an already known eigenpair, without snapping.
    pub fn with_spectrum(
        d: f64,
        q: u32,
        a: Vec<f64>,
        domain: Interval,
        sigma1: f64,
        phi0: DVector<f64>,
    ) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "diffusion must be positive, got {d}"
            )));
        }
        if q == 3 {
            return Err(Error::InvalidParameter(
                "q = 3 degenerates the Newton polygon and is not supported".into(),
            ));
        }
        if q < 4 {
            return Err(Error::InvalidParameter(format!("q must be at least 4, got {q}")));
        }
        let norm_a = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm_a > 0.0 && norm_a.is_finite()) {
            return Err(Error::InvalidParameter(
                "convection vector must be nonzero".into(),
            ));
        }
        if !(sigma1 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma1 must be positive, got {sigma1}"
            )));
        }
        Ok(Self {
            d,
            d_requested: d,
            q,
            a,
            domain,
            sigma1,
            phi0,
        })
    }

    /// Same problem at another diffusion, keeping the cached eigenpair.
    pub fn with_d(&self, d: f64) -> Result<Self> {
        let mut p = Self::with_spectrum(
            d,
            self.q,
            self.a.clone(),
            self.domain,
            self.sigma1,
            self.phi0.clone(),
        )?;
        p.d_requested = d;
        Ok(p)
    }

    pub fn abs_a(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Convection component along the 1D axis.
    fn a1(&self) -> f64 {
        self.a[0]
    }

    pub fn q_is_odd(&self) -> bool {
        self.q % 2 == 1
    }

    pub fn critical_d(&self) -> f64 {
        1.0 / self.sigma1
    }

    pub fn regime(&self) -> Regime {
        let t = self.d * self.sigma1 - 1.0;
        if t.abs() <= REGIME_TOL {
            Regime::Critical
        } else if t < 0.0 {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }
}

fn check(g: &Grid, u: &DVector<f64>) -> Result<()> {
    g.check(u)
}

/// `𝔉(λ,u) = dΔu + λ a·∇u + u + λu² − u^q` at the interior nodes.
pub fn residual(p: &ProblemParams, lam: f64, u: &DVector<f64>, g: &Grid) -> Result<DVector<f64>> {
    check(g, u)?;
    let n = g.n;
    let dl = p.d / (g.h * g.h);
    let cg = lam * p.a1() / (2.0 * g.h);
    let q = p.q as i32;
    let mut r = DVector::zeros(n);
    for i in 0..n {
        let ui = u[i];
        let left = if i > 0 { u[i - 1] } else { 0.0 };
        let right = if i + 1 < n { u[i + 1] } else { 0.0 };
        r[i] = dl * (left - 2.0 * ui + right) + cg * (right - left) + ui + lam * ui * ui - ui.powi(q);
    }
    Ok(r)
}

/// Residual written for `v = −u`: returns `−𝔉(λ, −v)`, i.e.
/// `dΔv + λ a·∇v + v − λv² ∓ v^q` with `−` for odd and `+` for even `q`.
pub fn reflected_residual(p: &ProblemParams, lam: f64, v: &DVector<f64>, g: &Grid) -> Result<DVector<f64>> {
    Ok(-residual(p, lam, &(-v), g)?)
}

/// Linear part `d·Lap + λ a·Grad + I`.
pub fn linear_operator(p: &ProblemParams, lam: f64, g: &Grid) -> Tridiagonal {
    let mut t = g.lap.combine(p.d, &g.grad, lam * p.a1());
    t.diag.iter_mut().for_each(|v| *v += 1.0);
    t
}

/// `∂𝔉/∂u = d·Lap + λ a·Grad + diag(1 + 2λu − q u^{q−1})`.
pub fn jacobian_u(p: &ProblemParams, lam: f64, u: &DVector<f64>, g: &Grid) -> Result<Tridiagonal> {
    check(g, u)?;
    let mut t = g.lap.combine(p.d, &g.grad, lam * p.a1());
    let q = p.q as i32;
    for (d, &ui) in t.diag.iter_mut().zip(u.iter()) {
        *d += 1.0 + 2.0 * lam * ui - p.q as f64 * ui.powi(q - 1);
    }
    Ok(t)
}

/// `∂𝔉/∂λ = a·Grad u + u²`.
pub fn jacobian_lambda(p: &ProblemParams, _lam: f64, u: &DVector<f64>, g: &Grid) -> Result<DVector<f64>> {
    check(g, u)?;
    let gu = g.grad.mul_vec(u)?;
    Ok(gu * p.a1() + u.component_mul(u))
}

fn zeta_exponent_bound(p: &ProblemParams, lam: f64) -> f64 {
    lam.abs() * p.abs_a() * p.domain.length().max(p.domain.lo.abs().max(p.domain.hi.abs())) / (2.0 * p.d)
}

/// Nodal values of `ζ(λ,d,x) = exp(−(λ/2d)⟨a,x⟩)`.
pub fn zeta(p: &ProblemParams, lam: f64, g: &Grid) -> Result<DVector<f64>> {
    let bound = zeta_exponent_bound(p, lam);
    if bound > 700.0 {
        return Err(Error::OutOfRange(format!(
            "exponential weight exponent {bound:.1} exceeds 700"
        )));
    }
    let c = -lam * p.a1() / (2.0 * p.d);
    Ok(g.nodes.map(|x| (c * x).exp()))
}

/// Change of variables `u = ζ v`.
pub fn transform(
    p: &ProblemParams,
    lam: f64,
    u: &DVector<f64>,
    g: &Grid,
    direction: Direction,
) -> Result<DVector<f64>> {
    check(g, u)?;
    let z = zeta(p, lam, g)?;
    Ok(match direction {
        Direction::ToSelfAdjoint => u.component_div(&z),
        Direction::FromSelfAdjoint => u.component_mul(&z),
    })
}

/// Residual of the transformed problem
/// `dΔv + (1 − λ²|a|²/4d) v + (λ − ζ^{q−2} v^{q−2}) ζ v²`.
pub fn transformed_residual(p: &ProblemParams, lam: f64, v: &DVector<f64>, g: &Grid) -> Result<DVector<f64>> {
    check(g, v)?;
    let z = zeta(p, lam, g)?;
    let lin = 1.0 - lam * lam * p.abs_a().powi(2) / (4.0 * p.d);
    let mut r = g.lap.mul_vec(v)? * p.d + v * lin;
    let qm2 = p.q as i32 - 2;
    for i in 0..g.n {
        let (vi, zi) = (v[i], z[i]);
        r[i] += (lam - zi.powi(qm2) * vi.powi(qm2)) * zi * vi * vi;
    }
    Ok(r)
}

/// Sup-norm bound for positive (`C(λ) = 1 + λ^{1/(q−2)}`, `λ > 0`) and
/// negative (`1 + |λ|^{1/(q−2)}`, `λ ≤ 0`) solutions; `1` otherwise.
pub fn apriori_bound(lam: f64, q: u32, sign: Sign) -> f64 {
    let e = 1.0 / (q as f64 - 2.0);
    match sign {
        Sign::Positive if lam > 0.0 => 1.0 + lam.powf(e),
        Sign::Negative if lam <= 0.0 => 1.0 + lam.abs().powf(e),
        _ => 1.0,
    }
}

/// Admissible λ-range for solutions of one sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WindowBounds {
    Interval {
        lo: f64,
        hi: f64,
    },
    Empty,
    /// No bound is available for this sign and parity.
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaWindow {
    pub sign: Sign,
    pub bounds: WindowBounds,
}

impl LambdaWindow {
    pub fn contains(&self, lam: f64, slack: f64) -> bool {
        match self.bounds {
            WindowBounds::Interval { lo, hi } => lam >= lo - slack && lam <= hi + slack,
            WindowBounds::Empty => false,
            WindowBounds::Unconstrained => true,
        }
    }
}

/// `Γ(λ) = λ²|a|²/(4d²) − λ(1 + λ^{1/(q−2)})/d` for `λ ≥ 0`.
pub fn gamma(lam: f64, d: f64, abs_a: f64, q: u32) -> f64 {
    let e = 1.0 / (q as f64 - 2.0);
    lam * lam * abs_a * abs_a / (4.0 * d * d) - lam * (1.0 + lam.powf(e)) / d
}

fn gamma_prime(lam: f64, d: f64, abs_a: f64, q: u32) -> f64 {
    let e = 1.0 / (q as f64 - 2.0);
    lam * abs_a * abs_a / (2.0 * d * d) - (1.0 + (1.0 + e) * lam.powf(e)) / d
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let flo = f(lo);
    if flo == 0.0 {
        return Ok(lo);
    }
    let lo_neg = flo < 0.0;
    for _ in 0..WINDOW_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi.abs().max(1.0) {
            return Ok(mid);
        }
        if (f(mid) < 0.0) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        what: "window bisection",
        iterations: WINDOW_MAX_ITER,
    })
}

fn expand_until_positive(f: impl Fn(f64) -> f64, start: f64) -> Result<f64> {
    let mut hi = start.max(1.0);
    for _ in 0..WINDOW_MAX_ITER {
        if f(hi) > 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
    }
    Err(Error::NoConvergence {
        what: "window bracketing",
        iterations: WINDOW_MAX_ITER,
    })
}

/// Closed-form λ-window for positive solutions; the negative window for odd
/// `q` is its mirror image. Even `q` carries no negative window.
pub fn lambda_window(p: &ProblemParams, sign: Sign) -> Result<LambdaWindow> {
    if sign == Sign::Negative && !p.q_is_odd() {
        return Ok(LambdaWindow {
            sign,
            bounds: WindowBounds::Unconstrained,
        });
    }
    let (d, abs_a, q) = (p.d, p.abs_a(), p.q);
    let c = 1.0 / d - p.sigma1;
    let g = |l: f64| gamma(l, d, abs_a, q);
    let gp = |l: f64| gamma_prime(l, d, abs_a, q);

    // Γ' is convex with Γ'(0) < 0, so Γ has a single minimizer.
    let bracket = expand_until_positive(gp, 1.0)?;
    let argmin = bisect(0.0, bracket, gp)?;

    let positive = if c >= 0.0 {
        let shifted = |l: f64| g(l) - c;
        let top = expand_until_positive(shifted, argmin.max(1.0))?;
        let hi = bisect(argmin, top, shifted)?;
        let lo = -2.0 / abs_a * (d * (1.0 - p.sigma1 * d)).max(0.0).sqrt();
        WindowBounds::Interval { lo, hi }
    } else if g(argmin) > c {
        WindowBounds::Empty
    } else {
        let shifted = |l: f64| g(l) - c;
        let c1 = bisect(0.0, argmin, shifted)?;
        let top = expand_until_positive(shifted, argmin.max(1.0))?;
        let c2 = bisect(argmin, top, shifted)?;
        WindowBounds::Interval { lo: c1, hi: c2 }
    };

    let bounds = match (sign, positive) {
        (Sign::Negative, WindowBounds::Interval { lo, hi }) => WindowBounds::Interval { lo: -hi, hi: -lo },
        (_, b) => b,
    };
    Ok(LambdaWindow { sign, bounds })
}

/// Discrete strong-positivity classifier; strict inequalities are relaxed by
/// `tol`, and `sup|u| ≤ tol` is reported as trivial.
pub fn classify_sign(u: &DVector<f64>, g: &Grid, tol: f64) -> SignClass {
    let sup = u.amax();
    if sup <= tol {
        return SignClass::Trivial;
    }
    let (left, right) = g.outward_slopes(u);
    let slope_tol = tol / g.h;
    if u.iter().all(|v| *v > -tol) && left < slope_tol && right < slope_tol && u.max() > tol {
        return SignClass::StrictlyPositive;
    }
    if u.iter().all(|v| *v < tol) && left > -slope_tol && right > -slope_tol && u.min() < -tol {
        return SignClass::StrictlyNegative;
    }
    SignClass::Mixed
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup(n: usize, d: f64, q: u32) -> (Grid, ProblemParams) {
        let g = Grid::build(n, Interval::default()).unwrap();
        let p = ProblemParams::new(d, q, vec![1.0], &g).unwrap();
        (g, p)
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = Grid::build(20, Interval::default()).unwrap();
        assert!(ProblemParams::new(1.0, 3, vec![1.0], &g).is_err());
        assert!(ProblemParams::new(-1.0, 4, vec![1.0], &g).is_err());
        assert!(ProblemParams::new(1.0, 4, vec![0.0], &g).is_err());
        assert!(ProblemParams::new(1.0, 4, vec![1.0, 0.0], &g).is_err());
    }

    #[test]
    fn critical_diffusion_is_snapped() {
        let (_, p) = setup(100, 1.0, 4);
        assert_eq!(p.regime(), Regime::Critical);
        assert_eq!(p.d_requested, 1.0);
        let (_, p) = setup(100, 1.02, 4);
        assert_eq!(p.regime(), Regime::Supercritical);
        assert_eq!(p.d, 1.02);
    }

    #[test]
    fn residual_vanishes_on_trivial_state() {
        let (g, p) = setup(40, 0.3, 5);
        for lam in [-3.0, 0.0, 0.7, 12.0] {
            let r = residual(&p, lam, &DVector::zeros(g.n), &g).unwrap();
            assert!(r.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn residual_of_sine_at_zero_lambda() {
        let (g, p) = setup(400, 1.0, 4);
        let p = p.with_d(1.0).unwrap();
        let u = g.sample(f64::sin);
        let r = residual(&p, 0.0, &u, &g).unwrap();
        let expected = g.sample(|x| -x.sin().powi(4));
        assert!((r - expected).amax() < g.h * g.h);
    }

    #[test]
    fn residual_rejects_wrong_length() {
        let (g, p) = setup(20, 1.0, 4);
        assert!(residual(&p, 1.0, &DVector::zeros(g.n + 2), &g).is_err());
    }

    #[test]
    fn jacobian_at_zero_is_linearization() {
        let (g, p) = setup(30, 0.4, 4);
        let j = jacobian_u(&p, 1.3, &DVector::zeros(g.n), &g).unwrap();
        assert_eq!(j, linear_operator(&p, 1.3, &g));
    }

    #[test]
    fn jacobian_diagonal_for_q4() {
        let (g, p) = setup(30, 0.4, 4);
        let u = g.sample(|x| 0.3 + x.cos());
        let j = jacobian_u(&p, 2.0, &u, &g).unwrap();
        let base = -2.0 * p.d / (g.h * g.h);
        for i in 0..g.n {
            let ui = u[i];
            assert_relative_eq!(
                j.diag[i] - base,
                1.0 + 4.0 * ui - 4.0 * ui.powi(3),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn jacobian_lambda_at_phi0() {
        let (g, p) = setup(50, 0.4, 4);
        let jl = jacobian_lambda(&p, 0.9, &p.phi0, &g).unwrap();
        for i in 1..g.n - 1 {
            let c = (p.phi0[i + 1] - p.phi0[i - 1]) / (2.0 * g.h);
            assert_relative_eq!(jl[i], c + p.phi0[i] * p.phi0[i], epsilon = 1e-12);
        }
        assert!(jacobian_lambda(&p, 0.9, &DVector::zeros(g.n), &g)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn reflected_residual_parity() {
        for q in [4, 5] {
            let (g, p) = setup(30, 0.5, q);
            let v = g.sample(|x| 0.7 * x.sin());
            let lam = 0.8;
            let r = reflected_residual(&p, lam, &v, &g).unwrap();
            let lin = linear_operator(&p, lam, &g).mul_vec(&v).unwrap();
            let sign = if q % 2 == 1 { -1.0 } else { 1.0 };
            let expected = lin - v.map(|x| lam * x * x) + v.map(|x| sign * x.powi(q as i32));
            assert!((r - expected).amax() < 1e-12);
        }
    }

    #[test]
    fn transform_round_trip_and_identity_at_zero() {
        let (g, p) = setup(30, 0.5, 4);
        let u = g.sample(|x| x.sin() + 0.1 * x);
        let v = transform(&p, 0.0, &u, &g, Direction::ToSelfAdjoint).unwrap();
        assert_eq!(v, u);
        let v = transform(&p, 1.7, &u, &g, Direction::ToSelfAdjoint).unwrap();
        let back = transform(&p, 1.7, &v, &g, Direction::FromSelfAdjoint).unwrap();
        assert!((back - &u).amax() <= 1e-14 * u.amax());
        assert!(matches!(
            transform(&p, 500.0, &u, &g, Direction::ToSelfAdjoint),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn apriori_bound_values() {
        assert_eq!(apriori_bound(-1.0, 4, Sign::Positive), 1.0);
        assert_eq!(apriori_bound(1.0, 4, Sign::Positive), 2.0);
        assert_relative_eq!(apriori_bound(-4.0, 6, Sign::Negative), 1.0 + 4f64.powf(0.25));
        assert_eq!(apriori_bound(2.0, 6, Sign::Negative), 1.0);
    }

    #[test]
    fn window_lower_edge_is_minus_lambda1() {
        let g = Grid::build(20, Interval::default()).unwrap();
        let p =
            ProblemParams::with_spectrum(0.25, 4, vec![1.0], g.interval, 1.0, DVector::zeros(20)).unwrap();
        let w = lambda_window(&p, Sign::Positive).unwrap();
        match w.bounds {
            WindowBounds::Interval { lo, hi } => {
                assert_relative_eq!(lo, -(0.75f64).sqrt(), epsilon = 1e-12);
                assert!(hi > 0.0);
                assert_relative_eq!(gamma(hi, 0.25, 1.0, 4), 3.0, epsilon = 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
        let wn = lambda_window(&p, Sign::Negative).unwrap();
        assert_eq!(wn.bounds, WindowBounds::Unconstrained);
    }

    #[test]
    fn window_contains_zero_iff_subcritical() {
        for (d, inside) in [(0.5, true), (1.0, true), (1.5, false)] {
            let p =
                ProblemParams::with_spectrum(d, 5, vec![1.0], Interval::default(), 1.0, DVector::zeros(8))
                    .unwrap();
            let w = lambda_window(&p, Sign::Positive).unwrap();
            assert_eq!(w.contains(0.0, 0.0), inside, "d = {d}");
            let wn = lambda_window(&p, Sign::Negative).unwrap();
            assert_eq!(wn.contains(0.0, 0.0), inside, "d = {d}");
        }
    }

    #[test]
    fn classify_sign_examples() {
        let g = Grid::build(50, Interval::default()).unwrap();
        let s = g.sample(f64::sin);
        assert_eq!(classify_sign(&s, &g, 1e-9), SignClass::StrictlyPositive);
        assert_eq!(classify_sign(&(-&s), &g, 1e-9), SignClass::StrictlyNegative);
        assert_eq!(classify_sign(&DVector::zeros(g.n), &g, 1e-9), SignClass::Trivial);
        assert_eq!(
            classify_sign(&g.sample(|x| (2.0 * x).sin()), &g, 1e-9),
            SignClass::Mixed
        );
    }
}
