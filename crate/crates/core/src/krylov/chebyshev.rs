//! Chebyshev semi-iteration for symmetric positive definite systems, used for
//! the pressure mass matrix.

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, CsrMatrix};

/// Eigenvalue interval of the (optionally diagonally scaled) matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebyshevBounds {
    pub lower: f64,
    pub upper: f64,
}

impl ChebyshevBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower > 0.0 && upper > lower && upper.is_finite()) {
            return Err(Error::config("chebyshev_bounds", format!("need 0 < lower < upper, got [{lower}, {upper}]")));
        }
        Ok(ChebyshevBounds { lower, upper })
    }

    /// Gershgorin upper bound of `D⁻¹A` (or `A`). The Gershgorin lower
    /// bound is used when positive; otherwise the smallest eigenvalue is
    /// estimated by power iteration on the shifted matrix and reduced by 10%.
    pub fn estimate(a: &CsrMatrix, jacobi: bool) -> Result<Self> {
        let n = a.nrows();
        let diag = a.diagonal();
        if diag.iter().any(|&d| d <= 0.0) {
            return Err(Error::config("chebyshev_bounds", "matrix diagonal is not positive"));
        }
        let scale = |i: usize| if jacobi { 1.0 / diag[i] } else { 1.0 };
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let off: f64 = a.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum();
            let s = scale(i);
            lo = lo.min(s * (diag[i] - off));
            hi = hi.max(s * (diag[i] + off));
        }
        if lo > 0.0 {
            // a degenerate interval (e.g. a scaled diagonal matrix) is widened slightly
            if hi <= lo * (1.0 + 1e-9) {
                let mid = 0.5 * (lo + hi);
                return ChebyshevBounds::new(mid * (1.0 - 1e-6), mid * (1.0 + 1e-6));
            }
            return ChebyshevBounds::new(lo, hi);
        }
        // power iteration on hi*I - S, whose dominant eigenvalue is hi - λmin
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.37 * ((i * 7919) % 101) as f64 / 101.0).collect();
        let mut y = vec![0.0; n];
        let mut mu = 0.0;
        for _ in 0..200 {
            let nx = norm2(&x);
            x.iter_mut().for_each(|v| *v /= nx);
            a.matvec(&x, &mut y);
            for i in 0..n {
                y[i] = hi * x[i] - scale(i) * y[i];
            }
            let next = dot(&x, &y);
            std::mem::swap(&mut x, &mut y);
            if (next - mu).abs() <= 1e-6 * next.abs() {
                mu = next;
                break;
            }
            mu = next;
        }
        let lambda_min = hi - mu;
        ChebyshevBounds::new(0.9 * lambda_min.max(hi * 1e-6), hi)
    }
}

/// Fixed-iteration Chebyshev solver with optional Jacobi scaling.
#[derive(Debug, Clone)]
pub struct ChebyshevSolver {
    matrix: CsrMatrix,
    inv_diag: Option<Vec<f64>>,
    pub bounds: ChebyshevBounds,
    pub iterations: usize,
}

impl ChebyshevSolver {
    pub fn new(matrix: CsrMatrix, bounds: ChebyshevBounds, iterations: usize, jacobi: bool) -> Self {
        let inv_diag = jacobi.then(|| matrix.diagonal().iter().map(|d| 1.0 / d).collect());
        ChebyshevSolver { matrix, inv_diag, bounds, iterations }
    }

    /// Jacobi-scaled solver with estimated bounds.
    pub fn with_estimated_bounds(matrix: CsrMatrix, iterations: usize) -> Result<Self> {
        let bounds = ChebyshevBounds::estimate(&matrix, true)?;
        Ok(Self::new(matrix, bounds, iterations, true))
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let n = b.len();
        let ChebyshevBounds { lower, upper } = self.bounds;
        let theta = 0.5 * (upper + lower);
        let delta = 0.5 * (upper - lower);
        let sigma = theta / delta;
        let precond = |r: &[f64], out: &mut [f64]| match &self.inv_diag {
            Some(d) => {
                for i in 0..n {
                    out[i] = d[i] * r[i];
                }
            }
            None => out.copy_from_slice(r),
        };
        x.iter_mut().for_each(|v| *v = 0.0);
        let mut r = b.to_vec();
        let mut z = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut ad = vec![0.0; n];
        precond(&r, &mut z);
        for i in 0..n {
            d[i] = z[i] / theta;
        }
        let mut rho = 1.0 / sigma;
        for it in 0..self.iterations {
            for i in 0..n {
                x[i] += d[i];
            }
            if it + 1 == self.iterations {
                break;
            }
            self.matrix.matvec(&d, &mut ad);
            for i in 0..n {
                r[i] -= ad[i];
            }
            precond(&r, &mut z);
            let rho_next = 1.0 / (2.0 * sigma - rho);
            for i in 0..n {
                d[i] = rho_next * rho * d[i] + 2.0 * rho_next / delta * z[i];
            }
            rho = rho_next;
        }
    }
}

/// Approximate `M⁻¹ r` by `iters` Jacobi-scaled Chebyshev steps with
/// estimated bounds.
pub fn chebyshev_mass_solve(m: &CsrMatrix, r: &[f64], iters: usize) -> Result<Vec<f64>> {
    let solver = ChebyshevSolver::with_estimated_bounds(m.clone(), iters)?;
    let mut x = vec![0.0; r.len()];
    solver.solve_into(r, &mut x);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cheb_t(k: usize, x: f64) -> f64 {
        (k as f64 * x.acosh()).cosh()
    }

    #[test]
    fn identity_is_exact_after_one_iteration() {
        let b = [1.0, -3.0, 2.5];
        let x = chebyshev_mass_solve(&CsrMatrix::identity(3), &b, 1).unwrap();
        for (p, q) in x.iter().zip(b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn inverted_bounds_are_rejected() {
        assert!(ChebyshevBounds::new(2.0, 1.0).is_err());
        assert!(ChebyshevBounds::new(0.0, 1.0).is_err());
    }

    #[test]
    fn endpoint_error_matches_chebyshev_factor() {
        // error component on the extreme eigenvector is damped by exactly 1/T_k(σ)
        let (lo, hi) = (0.5, 4.5);
        let diag = [lo, 1.0, 2.0, 3.0, hi];
        let a = CsrMatrix::from_diagonal(&diag);
        let bounds = ChebyshevBounds::new(lo, hi).unwrap();
        for k in 1..=6 {
            let s = ChebyshevSolver::new(a.clone(), bounds, k, false);
            let exact = [1.0, 0.0, 0.0, 0.0, 0.0];
            let b = [lo, 0.0, 0.0, 0.0, 0.0];
            let mut x = vec![0.0; 5];
            s.solve_into(&b, &mut x);
            let err = (x[0] - exact[0]).abs();
            let sigma = (hi + lo) / (hi - lo);
            let factor = 1.0 / cheb_t(k, sigma);
            assert!((err / factor - 1.0).abs() < 0.1, "k={k}: {err} vs {factor}");
        }
    }
}
