//! Uniform Dirichlet mesh with centered difference operators and quadrature.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::Tridiagonal;

/// Smallest admissible number of interior nodes.
pub const MIN_NODES: usize = 8;

/// Closed interval `[lo, hi]` on which the problem is posed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidParameter(format!("bad interval ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

impl Default for Interval {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: std::f64::consts::PI,
        }
    }
}

/// Interior nodes of a uniform mesh; boundary values are eliminated (zero).
#[derive(Debug, Clone)]
pub struct Grid {
    pub n: usize,
    pub h: f64,
    pub interval: Interval,
    pub nodes: DVector<f64>,
    /// Three-point Laplacian.
    pub lap: Tridiagonal,
    /// Centered first derivative.
    pub grad: Tridiagonal,
    pub quad_weights: DVector<f64>,
}

impl Grid {
    pub fn build(n: usize, interval: Interval) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::InvalidParameter(format!(
                "need at least {MIN_NODES} interior nodes, got {n}"
            )));
        }
        let h = interval.length() / (n as f64 + 1.0);
        let nodes = DVector::from_fn(n, |i, _| interval.lo + (i as f64 + 1.0) * h);
        let ih2 = 1.0 / (h * h);
        let lap = Tridiagonal {
            lower: vec![ih2; n - 1],
            diag: vec![-2.0 * ih2; n],
            upper: vec![ih2; n - 1],
        };
        let i2h = 0.5 / h;
        let grad = Tridiagonal {
            lower: vec![-i2h; n - 1],
            diag: vec![0.0; n],
            upper: vec![i2h; n - 1],
        };
        // Trapezoid rule; the zero boundary values contribute nothing.
        let quad_weights = DVector::from_element(n, h);
        Ok(Self {
            n,
            h,
            interval,
            nodes,
            lap,
            grad,
            quad_weights,
        })
    }

    /// Spatial dimension of the mesh.
    pub fn dim(&self) -> usize {
        1
    }

    pub fn interior_count(&self) -> usize {
        self.n
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        self.nodes.map(f)
    }

    pub fn check(&self, u: &DVector<f64>) -> Result<()> {
        check_len(self.n, u.len())
    }

    pub fn quad(&self, f: &DVector<f64>) -> f64 {
        debug_assert_eq!(f.len(), self.n);
        self.quad_weights.dot(f)
    }

    pub fn inner(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        f.iter()
            .zip(g.iter())
            .zip(self.quad_weights.iter())
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn l2_norm(&self, f: &DVector<f64>) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// Outward normal derivatives at the left and right endpoints by one-sided
    /// differences against the zero boundary values.
    pub fn outward_slopes(&self, u: &DVector<f64>) -> (f64, f64) {
        (-u[0] / self.h, -u[self.n - 1] / self.h)
    }

    /// Principal Dirichlet eigenpair of `−lap` by unshifted inverse iteration.
    ///
    /// The eigenvector is positive and normalized by `quad(φ²) = 1`.
    pub fn principal_eigenpair(&self) -> Result<(f64, DVector<f64>)> {
        const MAX_SWEEPS: usize = 500;
        let neg_lap = self.lap.scaled(-1.0);
        let lu = neg_lap.factor()?;
        let mut v = self.sample(|x| {
            let t = (x - self.interval.lo) / self.interval.length();
            t * (1.0 - t) + 0.1
        });
        v /= v.norm();
        let mut sigma = f64::NAN;
        for sweep in 0..MAX_SWEEPS {
            let mut w = lu.solve(&v)?;
            w /= w.norm();
            let rayleigh = w.dot(&neg_lap.mul_vec(&w)?);
            let change = (&w - &v).amax();
            v = w;
            let converged = (rayleigh - sigma).abs() <= 1e-15 * rayleigh.abs() && change < 1e-13;
            sigma = rayleigh;
            if converged && sweep > 2 {
                if v.sum() < 0.0 {
                    v = -v;
                }
                let scale = self.l2_norm(&v);
                return Ok((sigma, v / scale));
            }
        }
        Err(Error::NoConvergence {
            what: "principal eigenpair inverse iteration",
            iterations: MAX_SWEEPS,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::build(n, Interval::default()).unwrap()
    }

    #[test]
    fn rejects_small_meshes() {
        assert!(Grid::build(3, Interval::default()).is_err());
    }

    #[test]
    fn spacing_is_length_over_cells() {
        assert!((grid(99).h - PI / 100.0).abs() < 1e-15);
    }

    #[test]
    fn laplacian_stencil() {
        let g = grid(20);
        let ih2 = 1.0 / (g.h * g.h);
        assert_eq!(g.lap.lower[5], ih2);
        assert_eq!(g.lap.diag[6], -2.0 * ih2);
        assert_eq!(g.lap.upper[6], ih2);
    }

    #[test]
    fn grad_is_exact_on_linear_functions() {
        let g = grid(30);
        let dx = g.grad.mul_vec(&g.nodes).unwrap();
        for i in 1..g.n - 1 {
            assert!((dx[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_is_antisymmetric() {
        let g = grid(12);
        let m = g.grad.to_dense();
        assert_eq!(m.transpose(), -m);
    }

    #[test]
    fn quadrature_of_sines() {
        let g = grid(400);
        let s1 = g.quad(&g.sample(f64::sin));
        let s3 = g.quad(&g.sample(|x| x.sin().powi(3)));
        assert!((s1 - 2.0).abs() < 2.0 * g.h * g.h);
        assert!((s3 - 4.0 / 3.0).abs() < 2.0 * g.h * g.h);
        assert_eq!(g.quad(&DVector::zeros(g.n)), 0.0);
    }

    #[test]
    fn principal_eigenpair_matches_sine() {
        let g = grid(200);
        let (sigma, phi) = g.principal_eigenpair().unwrap();
        let exact = 2.0 * (1.0 - g.h.cos()) / (g.h * g.h);
        assert!((sigma - exact).abs() < 1e-11);
        assert!((sigma - 1.0).abs() < g.h * g.h);
        let reference = g.sample(|x| (2.0 / PI).sqrt() * x.sin());
        assert!((&phi - reference).amax() < g.h * g.h);
        assert!((g.quad(&phi.component_mul(&phi)) - 1.0).abs() < 1e-12);
        assert!(phi.iter().all(|v| *v > 0.0));
    }
}
