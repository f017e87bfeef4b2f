//! Reduced bifurcation equation at the degenerate point `dσ₁ = 1`:
//! coefficients, Newton polygon, Puiseux germs and local predictors.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::problem::ProblemParams;

/// Tolerance on `|dσ₁ − 1|` for the reduction to apply.
pub const CRITICAL_TOL: f64 = 1e-6;
/// Largest `|s|` or `|λ|` accepted by the local predictors.
pub const PREDICTOR_TRUST_RADIUS: f64 = 0.5;

/// Coefficients of `g(λ,x) = c0 λ² + b2 xλ − bq x^{q−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedCoefficients {
    pub c0: f64,
    pub b2: f64,
    pub bq: f64,
    pub q: u32,
    pub d: f64,
}

impl ReducedCoefficients {
    /// Monomials `(ℓ, j, coefficient)` of `x^ℓ λ^j` in the truncated equation.
    pub fn monomials(&self) -> [(i64, i64, f64); 3] {
        [(0, 2, self.c0), (1, 1, self.b2), (self.q as i64 - 1, 0, -self.bq)]
    }

    pub fn eval(&self, lam: f64, x: f64) -> f64 {
        self.c0 * lam * lam + self.b2 * x * lam - self.bq * x.powi(self.q as i32 - 1)
    }
}

/// Lyapunov–Schmidt coefficients at the critical diffusion.
pub fn ls_coefficients(p: &ProblemParams, g: &Grid) -> Result<ReducedCoefficients> {
    let defect = (p.d * p.sigma1 - 1.0).abs();
    if defect > CRITICAL_TOL {
        return Err(Error::Precondition(format!(
            "reduction needs d·σ₁ = 1, got defect {defect:e}"
        )));
    }
    g.check(&p.phi0)?;
    let phi = &p.phi0;
    let b2 = g.quad(&phi.map(|v| v.powi(3)));
    let bq = g.quad(&phi.map(|v| v.powi(p.q as i32 + 1)));
    Ok(ReducedCoefficients {
        c0: -p.abs_a().powi(2) / (2.0 * p.d),
        b2,
        bq,
        q: p.q,
        d: p.d,
    })
}

/// Exact rational number with positive denominator in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidParameter("zero denominator".into()));
        }
        let g = gcd(num, den).max(1);
        let s = den.signum();
        Ok(Self {
            num: s * num / g,
            den: s * den / g,
        })
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Lower convex hull of exponent pairs `(ℓ, j)`, restricted to the part
/// where `j` strictly decreases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewtonPolygon {
    pub vertices: Vec<(i64, i64)>,
}

impl NewtonPolygon {
    /// Consecutive vertex pairs.
    pub fn edges(&self) -> impl Iterator<Item = ((i64, i64), (i64, i64))> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

pub fn newton_polygon(points: &[(i64, i64)]) -> Result<NewtonPolygon> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("Newton polygon of no points".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    pts.dedup_by(|b, a| a.0 == b.0);

    let mut hull: Vec<(i64, i64)> = Vec::new();
    for &pt in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], pt) <= 0 {
            hull.pop();
        }
        hull.push(pt);
    }
    let min_j = hull.iter().map(|v| v.1).min().unwrap_or(0);
    let cut = hull.iter().position(|v| v.1 == min_j).unwrap_or(0);
    hull.truncate(cut + 1);
    Ok(NewtonPolygon { vertices: hull })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
    Both,
}

impl Side {
    pub fn factor(self) -> f64 {
        match self {
            Side::Minus => -1.0,
            _ => 1.0,
        }
    }
}

/// Leading term `x(λ) ≈ sign · coefficient · |λ|^exponent` on one side of
/// `λ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuiseuxBranch {
    pub exponent: Rational,
    pub coefficient: f64,
    pub lambda_side: Side,
    pub sign_of_x: Side,
}

impl PuiseuxBranch {
    pub fn x_at(&self, lam: f64) -> f64 {
        self.sign_of_x.factor() * self.coefficient * lam.abs().powf(self.exponent.to_f64())
    }

    pub fn admits(&self, lam: f64) -> bool {
        match self.lambda_side {
            Side::Plus => lam > 0.0,
            Side::Minus => lam < 0.0,
            Side::Both => lam != 0.0,
        }
    }
}

/// Real roots `β` of `β^k = r`.
fn real_roots(k: i64, r: f64) -> Vec<f64> {
    if r == 0.0 {
        return Vec::new();
    }
    let m = r.abs().powf(1.0 / k as f64);
    if k % 2 == 1 {
        vec![r.signum() * m]
    } else if r > 0.0 {
        vec![m, -m]
    } else {
        Vec::new()
    }
}

/// Germs of `g(λ,x) = 0` through the origin from the edges of the Newton
/// polygon of `rc`, one entry per side of `λ = 0` and sign of `x`.
pub fn puiseux_branches(rc: &ReducedCoefficients) -> Result<Vec<PuiseuxBranch>> {
    let monos = rc.monomials();
    let points: Vec<(i64, i64)> = monos.iter().map(|m| (m.0, m.1)).collect();
    let poly = newton_polygon(&points)?;
    let coeff = |v: (i64, i64)| monos.iter().find(|m| (m.0, m.1) == v).map(|m| m.2).unwrap_or(0.0);
    let mut out = Vec::new();
    for (v1, v2) in poly.edges() {
        let (c1, c2) = (coeff(v1), coeff(v2));
        let k = v2.0 - v1.0;
        let exponent = Rational::new(v1.1 - v2.1, k)?;
        for side in [Side::Plus, Side::Minus] {
            let s = side.factor();
            // c1 β^ℓ1 s^j1 + c2 β^ℓ2 s^j2 = 0 after dividing by the common power of |λ|.
            let rhs = -c1 * s.powi(v1.1 as i32) / (c2 * s.powi(v2.1 as i32));
            for beta in real_roots(k, rhs) {
                out.push(PuiseuxBranch {
                    exponent,
                    coefficient: beta.abs(),
                    lambda_side: side,
                    sign_of_x: if beta > 0.0 { Side::Plus } else { Side::Minus },
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.exponent
            .to_f64()
            .partial_cmp(&a.exponent.to_f64())
            .unwrap_or(Ordering::Equal)
            .then((a.lambda_side as u8).cmp(&(b.lambda_side as u8)))
            .then((a.sign_of_x as u8).cmp(&(b.sign_of_x as u8)))
    });
    Ok(out)
}

/// Residual of the two dominant monomials of `g` along the leading term of
/// `branch`, normalized by their magnitude. Zero up to rounding.
pub fn edge_cancellation(rc: &ReducedCoefficients, branch: &PuiseuxBranch) -> f64 {
    let s = branch.lambda_side.factor();
    let beta = branch.sign_of_x.factor() * branch.coefficient;
    let e = branch.exponent;
    // Monomials whose weight ℓ·e + j equals the minimum weight are dominant.
    let weights: Vec<(f64, i64, i64, f64)> = rc
        .monomials()
        .iter()
        .map(|&(l, j, c)| ((l * e.num + j * e.den) as f64 / e.den as f64, l, j, c))
        .collect();
    let wmin = weights.iter().map(|w| w.0).fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    let mut scale = 0.0;
    for &(w, l, j, c) in &weights {
        if (w - wmin).abs() < 1e-12 {
            let term = c * beta.powi(l as i32) * s.powi(j as i32);
            total += term;
            scale += term.abs();
        }
    }
    total.abs() / scale.max(f64::MIN_POSITIVE)
}

/// Least-squares fit of `|x| = c·|λ|^e` in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub coefficient: f64,
    /// Root-mean-square residual in `ln|x|`.
    pub residual: f64,
}

pub fn fit_power_law(samples: &[(f64, f64)]) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(l, x)| *l != 0.0 && *x != 0.0)
        .map(|(l, x)| (l.abs().ln(), x.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParameter("need two nonzero samples".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidParameter("samples share one |λ|".into()));
    }
    let e = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let b = my - e * mx;
    let residual = (pts.iter().map(|p| (p.1 - b - e * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(PowerLawFit {
        exponent: e,
        coefficient: b.exp(),
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictorKind {
    /// Simple eigenvalue at `lambda0`; amplitude `s` along `φ₀`.
    CrandallRabinowitz {
        lambda0: f64,
    },
    Puiseux(PuiseuxBranch),
}

/// First-order predictor `(λ, u)` near a trivial bifurcation point.
pub fn local_predictor(
    kind: PredictorKind,
    s_or_lam: f64,
    p: &ProblemParams,
    g: &Grid,
) -> Result<(f64, DVector<f64>)> {
    if s_or_lam.abs() > PREDICTOR_TRUST_RADIUS {
        return Err(Error::Precondition(format!(
            "predictor step {s_or_lam} beyond trust radius {PREDICTOR_TRUST_RADIUS}"
        )));
    }
    g.check(&p.phi0)?;
    match kind {
        PredictorKind::CrandallRabinowitz { lambda0 } => {
            if p.d * p.sigma1 >= 1.0 {
                return Err(Error::Precondition(
                    "simple bifurcation predictor needs d·σ₁ < 1".into(),
                ));
            }
            Ok((lambda0, &p.phi0 * s_or_lam))
        }
        PredictorKind::Puiseux(branch) => {
            if (p.d * p.sigma1 - 1.0).abs() > CRITICAL_TOL {
                return Err(Error::Precondition("Puiseux predictor needs d·σ₁ = 1".into()));
            }
            if !branch.admits(s_or_lam) {
                return Err(Error::Precondition(format!(
                    "λ = {s_or_lam} is on the wrong side for this germ"
                )));
            }
            Ok((s_or_lam, &p.phi0 * branch.x_at(s_or_lam)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Interval;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn critical(q: u32) -> (Grid, ProblemParams) {
        let g = Grid::build(400, Interval::default()).unwrap();
        let p = ProblemParams::new(1.0, q, vec![1.0], &g).unwrap();
        (g, p)
    }

    #[test]
    fn coefficients_against_sine_moments() {
        let (g, p) = critical(4);
        let rc = ls_coefficients(&p, &g).unwrap();
        assert_relative_eq!(rc.c0, -0.5 * p.sigma1, epsilon = 1e-15);
        let b2 = (2.0 / PI).powf(1.5) * 4.0 / 3.0;
        let bq = (2.0 / PI).powf(2.5) * 16.0 / 15.0;
        assert!((rc.b2 - b2).abs() < 5.0 * g.h * g.h);
        assert!((rc.bq - bq).abs() < 5.0 * g.h * g.h);
    }

    #[test]
    fn coefficients_need_critical_diffusion() {
        let g = Grid::build(50, Interval::default()).unwrap();
        let p = ProblemParams::new(0.5, 4, vec![1.0], &g).unwrap();
        assert!(matches!(ls_coefficients(&p, &g), Err(Error::Precondition(_))));
    }

    #[test]
    fn polygon_examples() {
        let poly = newton_polygon(&[(0, 2), (1, 1), (3, 0)]).unwrap();
        assert_eq!(poly.vertices, vec![(0, 2), (1, 1), (3, 0)]);
        let poly = newton_polygon(&[(0, 2), (1, 1), (2, 1), (3, 0)]).unwrap();
        assert_eq!(poly.vertices, vec![(0, 2), (1, 1), (3, 0)]);
        assert_eq!(newton_polygon(&[(4, 7)]).unwrap().vertices, vec![(4, 7)]);
        assert!(newton_polygon(&[]).is_err());
        // Collinear points collapse to the end points.
        assert_eq!(
            newton_polygon(&[(0, 2), (1, 1), (2, 0)]).unwrap().vertices,
            vec![(0, 2), (2, 0)]
        );
    }

    #[test]
    fn rational_normalizes() {
        assert_eq!(Rational::new(2, -4).unwrap(), Rational { num: -1, den: 2 });
        assert_eq!(Rational::new(3, 3).unwrap().to_string(), "1");
    }

    #[test]
    fn germs_for_both_parities() {
        for q in [4u32, 5] {
            let (g, p) = critical(q);
            let rc = ls_coefficients(&p, &g).unwrap();
            let germs = puiseux_branches(&rc).unwrap();
            assert_eq!(germs.len(), 4, "q = {q}");
            let slope = 0.5 / (p.d * rc.b2);
            let root = (rc.b2 / rc.bq).powf(1.0 / (q as f64 - 2.0));
            let lin: Vec<_> = germs.iter().filter(|b| b.exponent.den == 1).collect();
            assert_eq!(lin.len(), 2);
            for b in &lin {
                assert_relative_eq!(b.coefficient, slope, epsilon = 1e-12);
                assert!(edge_cancellation(&rc, b) < 1e-14);
                assert_eq!(b.lambda_side, b.sign_of_x);
            }
            let frac: Vec<_> = germs.iter().filter(|b| b.exponent.den != 1).collect();
            for b in &frac {
                assert_eq!(b.exponent, Rational::new(1, q as i64 - 2).unwrap());
                assert_relative_eq!(b.coefficient, root, epsilon = 1e-12);
                assert!(edge_cancellation(&rc, b) < 1e-14);
            }
            let positive_right = frac
                .iter()
                .filter(|b| b.lambda_side == Side::Plus && b.sign_of_x == Side::Plus)
                .count();
            assert_eq!(positive_right, 1);
            if q % 2 == 0 {
                assert!(frac.iter().all(|b| b.lambda_side == Side::Plus));
            } else {
                assert!(frac.iter().all(|b| b.lambda_side == b.sign_of_x));
            }
        }
    }

    #[test]
    fn predictors() {
        let (g, p) = critical(4);
        let rc = ls_coefficients(&p, &g).unwrap();
        let germs = puiseux_branches(&rc).unwrap();
        let slope = germs
            .iter()
            .find(|b| b.exponent.den == 1 && b.lambda_side == Side::Plus)
            .unwrap();
        let (lam, u) = local_predictor(PredictorKind::Puiseux(*slope), 0.01, &p, &g).unwrap();
        assert_eq!(lam, 0.01);
        assert!((g.inner(&u, &p.phi0) - 0.01 * slope.coefficient).abs() < 1e-12);
        let root = germs
            .iter()
            .find(|b| b.exponent.den == 2 && b.sign_of_x == Side::Plus)
            .unwrap();
        let (_, u) = local_predictor(PredictorKind::Puiseux(*root), 0.01, &p, &g).unwrap();
        assert_relative_eq!(u.amax(), root.coefficient * 0.1 * p.phi0.amax(), epsilon = 1e-12);
        assert!(local_predictor(PredictorKind::Puiseux(*root), -0.01, &p, &g).is_err());
        assert!(local_predictor(PredictorKind::Puiseux(*root), 0.9, &p, &g).is_err());

        let sub = ProblemParams::new(0.25, 5, vec![1.0], &g).unwrap();
        let (lam, u) = local_predictor(
            PredictorKind::CrandallRabinowitz { lambda0: 0.866 },
            0.0,
            &sub,
            &g,
        )
        .unwrap();
        assert_eq!(lam, 0.866);
        assert_eq!(u.amax(), 0.0);
    }
}
