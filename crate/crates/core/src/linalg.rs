//! Banded kernels: tridiagonal storage, pivoted LU, bordered solves and
//! Sturm-sequence eigenvalues for symmetric tridiagonal matrices.
//!
//! Every operator in the 1D discretization is tridiagonal, so the continuation
//! engine never forms dense matrices except for the small diagnostics in the
//! pencil module.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Relative pivot threshold below which a factorization is reported singular.
pub const SINGULAR_RTOL: f64 = 1e-13;

/// General tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    /// Sub-diagonal, `lower[i]` sits at row `i + 1`, column `i`.
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    /// Super-diagonal, `upper[i]` sits at row `i`, column `i + 1`.
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty tridiagonal matrix".into()));
        }
        check_len(n - 1, lower.len())?;
        check_len(n - 1, upper.len())?;
        Ok(Self { lower, diag, upper })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n);
        t.diag.iter_mut().for_each(|v| *v = 1.0);
        t
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        check_len(n, x.len())?;
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// `self * alpha + other * beta`, both of the same size.
    pub fn combine(&self, alpha: f64, other: &Tridiagonal, beta: f64) -> Tridiagonal {
        debug_assert_eq!(self.dim(), other.dim());
        let zip = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect()
        };
        Tridiagonal {
            lower: zip(&self.lower, &other.lower),
            diag: zip(&self.diag, &other.diag),
            upper: zip(&self.upper, &other.upper),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Tridiagonal {
        Tridiagonal {
            lower: self.lower.iter().map(|v| v * alpha).collect(),
            diag: self.diag.iter().map(|v| v * alpha).collect(),
            upper: self.upper.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn add_diagonal(&mut self, shift: &[f64]) {
        debug_assert_eq!(shift.len(), self.dim());
        for (d, s) in self.diag.iter_mut().zip(shift) {
            *d += s;
        }
    }

    pub fn transpose(&self) -> Tridiagonal {
        Tridiagonal {
            lower: self.upper.clone(),
            diag: self.diag.clone(),
            upper: self.lower.clone(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.lower[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.upper[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.upper[i];
                m[(i + 1, i)] = self.lower[i];
            }
        }
        m
    }

    pub fn factor(&self) -> Result<TridiagLu> {
        TridiagLu::new(self)
    }

    /// Diagonal similarity `D⁻¹ T D` that symmetrizes the matrix.
    ///
    /// Requires `lower[i] * upper[i] > 0` for every off-diagonal pair; the
    /// off-diagonal of the result is `sign(lower) * sqrt(lower * upper)`.
    pub fn symmetrized(&self) -> Result<SymTridiagonal> {
        let mut off = Vec::with_capacity(self.lower.len());
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            let prod = l * u;
            if prod <= 0.0 {
                return Err(Error::OutOfRange(format!(
                    "off-diagonal pair {i} has non-positive product {prod:e}; not symmetrizable"
                )));
            }
            off.push(l.signum() * prod.sqrt());
        }
        Ok(SymTridiagonal {
            diag: self.diag.clone(),
            off,
        })
    }
}

/// LU factorization with partial pivoting of a tridiagonal matrix. The upper
/// factor gains a second super-diagonal from row interchanges.
#[derive(Debug, Clone)]
pub struct TridiagLu {
    mult: Vec<f64>,
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    pub fn new(t: &Tridiagonal) -> Result<Self> {
        let n = t.dim();
        let scale = t.norm_inf().max(f64::MIN_POSITIVE);
        let mut u0 = t.diag.clone();
        let mut u1 = t.upper.clone();
        u1.push(0.0);
        let mut u2 = vec![0.0; n];
        let mut mult = t.lower.clone();
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if u0[i].abs() >= mult[i].abs() {
                if u0[i] != 0.0 {
                    let f = mult[i] / u0[i];
                    mult[i] = f;
                    u0[i + 1] -= f * u1[i];
                }
            } else {
                let f = u0[i] / mult[i];
                u0[i] = mult[i];
                mult[i] = f;
                let tmp = u1[i];
                u1[i] = u0[i + 1];
                u0[i + 1] = tmp - f * u0[i + 1];
                if i + 2 < n {
                    u2[i] = u1[i + 1];
                    u1[i + 1] = -f * u1[i + 1];
                }
                swapped[i] = true;
            }
        }
        if let Some((i, p)) = u0
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.abs() > SINGULAR_RTOL * scale))
        {
            return Err(Error::Singular(format!(
                "pivot {i} = {p:e} relative to norm {scale:e}"
            )));
        }
        Ok(Self {
            mult,
            u0,
            u1,
            u2,
            swapped,
        })
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        check_len(n, rhs.len())?;
        let mut b = rhs.clone();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let tmp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = tmp - self.mult[i] * b[i];
            } else {
                b[i + 1] -= self.mult[i] * b[i];
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            if i + 1 < n {
                acc -= self.u1[i] * b[i + 1];
            }
            if i + 2 < n {
                acc -= self.u2[i] * b[i + 2];
            }
            b[i] = acc / self.u0[i];
        }
        Ok(b)
    }

    /// Smallest absolute pivot over the largest, a cheap singularity indicator.
    pub fn pivot_ratio(&self) -> f64 {
        let (lo, hi) = self.u0.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), p| {
            (lo.min(p.abs()), hi.max(p.abs()))
        });
        lo / hi
    }
}

/// Estimate of the 2-norm condition number of `t`: `‖t‖∞` over the smallest
/// singular value from inverse iteration on `tᵀt`. Infinite when `t` does not
/// factor.
pub fn condition_estimate(t: &Tridiagonal) -> Result<f64> {
    let n = t.dim();
    let (lu, lut) = match (t.factor(), t.transpose().factor()) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Ok(f64::INFINITY),
    };
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    x /= x.norm();
    let mut growth = 0.0;
    for _ in 0..30 {
        let y = lut.solve(&lu.solve(&x)?)?;
        let ny = y.norm();
        if !ny.is_finite() {
            return Ok(f64::INFINITY);
        }
        let converged = (ny - growth).abs() <= 1e-6 * ny;
        growth = ny;
        x = y / ny;
        if converged {
            break;
        }
    }
    Ok(t.norm_inf() * growth.sqrt())
}

/// Solves the bordered system
///
/// ```text
/// [ T   b ] [z]   [r_top ]
/// [ cᵀ  e ] [y] = [r_last]
/// ```
///
/// by banded Gaussian elimination with partial pivoting inside the band. The
/// last row is eliminated on the fly and the trailing 2×2 block is pivoted in
/// full, so a singular `T` (fold points) is fine as long as the bordered matrix
/// itself is regular and `T` has a non-vanishing sub-diagonal.
pub fn solve_bordered(
    t: &Tridiagonal,
    b: &DVector<f64>,
    c: &DVector<f64>,
    e: f64,
    r_top: &DVector<f64>,
    r_last: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = t.dim();
    check_len(n, b.len())?;
    check_len(n, c.len())?;
    check_len(n, r_top.len())?;

    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut bcol = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut last: Vec<f64> = c.iter().copied().collect();
    let mut e = e;
    let mut rl = r_last;

    // Running state of the row about to be pivoted (columns k, k+1).
    let mut p = t.diag[0];
    let mut pq = if n > 1 { t.upper[0] } else { 0.0 };
    let mut pb = b[0];
    let mut pr = r_top[0];

    for k in 0..n.saturating_sub(1) {
        let nl = t.lower[k];
        let nd = t.diag[k + 1];
        let nu = if k + 2 < n { t.upper[k + 1] } else { 0.0 };
        let (nb, nr) = (b[k + 1], r_top[k + 1]);

        let (piv, oth) = if nl.abs() > p.abs() {
            ((nl, nd, nu, nb, nr), (p, pq, 0.0, pb, pr))
        } else {
            ((p, pq, 0.0, pb, pr), (nl, nd, nu, nb, nr))
        };
        if piv.0 == 0.0 {
            return Err(Error::Singular(format!("zero band pivot at column {k}")));
        }
        u0[k] = piv.0;
        u1[k] = piv.1;
        u2[k] = piv.2;
        bcol[k] = piv.3;
        rhs[k] = piv.4;

        let f = oth.0 / piv.0;
        p = oth.1 - f * piv.1;
        pq = oth.2 - f * piv.2;
        pb = oth.3 - f * piv.3;
        pr = oth.4 - f * piv.4;

        let g = last[k] / piv.0;
        last[k + 1] -= g * piv.1;
        if k + 2 < n {
            last[k + 2] -= g * piv.2;
        }
        e -= g * piv.3;
        rl -= g * piv.4;
    }

    // Trailing 2x2 block in (z[n-1], y).
    let (a11, a12, r1) = (p, pb, pr);
    let (a21, a22, r2) = (last[n - 1], e, rl);
    let scale = a11.abs().max(a12.abs()).max(a21.abs()).max(a22.abs());
    let (zl, y) = if a11.abs() >= a21.abs() {
        if a11 == 0.0 {
            return Err(Error::Singular("bordered system".into()));
        }
        let f = a21 / a11;
        let piv2 = a22 - f * a12;
        if !(piv2.abs() > f64::EPSILON * 1e-3 * scale) {
            return Err(Error::Singular("bordered system".into()));
        }
        let y = (r2 - f * r1) / piv2;
        ((r1 - a12 * y) / a11, y)
    } else {
        let f = a11 / a21;
        let piv2 = a12 - f * a22;
        if !(piv2.abs() > f64::EPSILON * 1e-3 * scale) {
            return Err(Error::Singular("bordered system".into()));
        }
        let y = (r1 - f * r2) / piv2;
        ((r2 - a22 * y) / a21, y)
    };

    let mut z = DVector::zeros(n);
    z[n - 1] = zl;
    for k in (0..n - 1).rev() {
        let mut acc = rhs[k] - u1[k] * z[k + 1] - bcol[k] * y;
        if k + 2 < n {
            acc -= u2[k] * z[k + 2];
        }
        z[k] = acc / u0[k];
    }
    if z.iter().any(|v| !v.is_finite()) || !y.is_finite() {
        return Err(Error::Singular("non-finite bordered solution".into()));
    }
    Ok((z, y))
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.dim() {
            let off2 = if i > 0 {
                self.off[i - 1] * self.off[i - 1]
            } else {
                0.0
            };
            q = self.diag[i] - x - if i > 0 { off2 / q } else { 0.0 };
            if q == 0.0 {
                q = -f64::EPSILON * (self.diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based), by bisection to full precision.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.dim());
        let (mut lo, mut hi) = self.gershgorin();
        let pad = 1e-12 * (lo.abs().max(hi.abs()) + 1.0);
        lo -= pad;
        hi += pad;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        self.eigenvalue(self.dim() - 1)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.off[i];
                m[(i + 1, i)] = self.off[i];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tridiag(rng: &mut ChaCha8Rng, n: usize) -> Tridiagonal {
        let mut v = |k: usize| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>();
        Tridiagonal::new(v(n - 1), v(n), v(n - 1)).unwrap()
    }

    #[test]
    fn lu_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 3, 10, 41] {
            let t = random_tridiag(&mut rng, n);
            let rhs = DVector::from_fn(n, |i, _| (i as f64).sin() + 0.5);
            let x = t.factor().unwrap().solve(&rhs).unwrap();
            let dense = t.to_dense().lu().solve(&rhs).unwrap();
            assert!((x - dense).amax() < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn lu_reports_singular() {
        let t = Tridiagonal::new(vec![1.0], vec![1.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(t.factor(), Err(Error::Singular(_))));
    }

    #[test]
    fn bordered_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 30] {
            let t = random_tridiag(&mut rng, n);
            let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let e = rng.random_range(-1.0..1.0);
            let r = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let rl = 0.3;
            let (z, y) = solve_bordered(&t, &b, &c, e, &r, rl).unwrap();

            let mut full = DMatrix::zeros(n + 1, n + 1);
            full.view_mut((0, 0), (n, n)).copy_from(&t.to_dense());
            full.view_mut((0, n), (n, 1)).copy_from(&b);
            full.view_mut((n, 0), (1, n)).copy_from(&c.transpose());
            full[(n, n)] = e;
            let mut rhs = DVector::zeros(n + 1);
            rhs.rows_mut(0, n).copy_from(&r);
            rhs[n] = rl;
            let sol = full.lu().solve(&rhs).unwrap();
            assert!((z - sol.rows(0, n)).amax() < 1e-8, "n = {n}");
            assert!((y - sol[n]).abs() < 1e-8);
        }
    }

    #[test]
    fn condition_estimate_tracks_dense_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [4, 17, 60] {
            let t = random_tridiag(&mut rng, n);
            let sv = t.to_dense().singular_values();
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            let exact = t.norm_inf() / smin;
            let est = condition_estimate(&t).unwrap();
            assert!((est / exact - 1.0).abs() < 1e-2, "n = {n}: {est} vs {exact}");
        }
    }

    #[test]
    fn bordered_handles_singular_block() {
        // T = tridiag(1,-2,1) shifted so that it is exactly singular.
        let n = 20;
        let lam = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        let t = Tridiagonal::new(vec![1.0; n - 1], vec![-2.0 + lam; n], vec![1.0; n - 1]).unwrap();
        let phi = DVector::from_fn(n, |i, _| {
            ((i + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).sin()
        });
        let r = DVector::from_fn(n, |i, _| (i as f64 * 0.3).cos());
        let (z, y) = solve_bordered(&t, &phi, &phi, 0.0, &r, 1.0).unwrap();
        let back = t.mul_vec(&z).unwrap() + &phi * y;
        assert!((back - r).amax() < 1e-9);
        assert!((phi.dot(&z) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sturm_eigenvalues_match_closed_form() {
        let n = 50;
        let s = SymTridiagonal {
            diag: vec![2.0; n],
            off: vec![-1.0; n - 1],
        };
        for k in [0, 7, n - 1] {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((s.eigenvalue(k) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetrization_preserves_spectrum() {
        let t = Tridiagonal::new(vec![0.5, 2.0], vec![1.0, -1.0, 3.0], vec![2.0, 0.25]).unwrap();
        let s = t.symmetrized().unwrap();
        let mut dense: Vec<f64> = s.to_dense().symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let mut general: Vec<f64> = t.to_dense().complex_eigenvalues().iter().map(|z| z.re).collect();
        general.sort_by(f64::total_cmp);
        for (a, b) in dense.iter().zip(&general) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
