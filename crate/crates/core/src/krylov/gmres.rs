//! Right-preconditioned flexible GMRES.

use serde::{Deserialize, Serialize};

use super::{LinearOperator, Preconditioner};
use crate::sparse::{axpy, dot, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmresOptions {
    /// Relative Euclidean residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Krylov subspace size before restarting; `None` never restarts.
    pub restart: Option<usize>,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { tol: 1e-8, max_iter: 200, restart: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖b − A x‖ / ‖b‖`, recomputed from the returned iterate.
    pub relative_residual: f64,
    /// Residual estimate carried by the Givens recursion, one entry per
    /// iteration (the first entry is the initial residual, 1).
    pub history: Vec<f64>,
    pub converged: bool,
    /// The Arnoldi process terminated with an invariant subspace.
    pub breakdown: bool,
}

/// Solves `A x = b` from a zero initial guess. Non-convergence within
/// `max_iter` is reported, not raised.
pub fn fgmres<A, P>(op: &A, precond: &mut P, rhs: &[f64], opts: &GmresOptions) -> (Vec<f64>, SolveReport)
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let n = op.dim();
    assert_eq!(rhs.len(), n, "right-hand side length differs from operator dimension");
    assert!(opts.tol > 0.0, "tolerance must be positive");
    let mut x = vec![0.0; n];
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        let report = SolveReport { iterations: 0, relative_residual: 0.0, history: vec![0.0], converged: true, breakdown: false };
        return (x, report);
    }
    let m_cap = opts.restart.unwrap_or(opts.max_iter).clamp(1, opts.max_iter.max(1));
    let mut history = vec![1.0];
    let mut total = 0usize;
    let mut breakdown = false;
    let mut converged = false;
    let mut r = rhs.to_vec();
    let mut beta = bnorm;

    while total < opts.max_iter && !converged && !breakdown {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h: Vec<Vec<f64>> = Vec::new(); // column j has j+2 entries
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut w = vec![0.0; n];

        for j in 0..m_cap {
            if total >= opts.max_iter {
                break;
            }
            let mut zj = vec![0.0; n];
            precond.apply(&v[j], &mut zj);
            op.apply(&zj, &mut w);
            z.push(zj);
            let mut col = vec![0.0; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                axpy(-hij, vi, &mut w);
            }
            let hnext = norm2(&w);
            col[j + 1] = hnext;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[j].hypot(col[j + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[j] / denom, col[j + 1] / denom) };
            col[j] = denom;
            col[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[j]);
            g[j] *= c;
            h.push(col);
            total += 1;
            let est = g[j + 1].abs() / bnorm;
            history.push(est);
            if est <= opts.tol {
                converged = true;
            }
            if hnext <= 1e-14 * denom.max(f64::MIN_POSITIVE) {
                breakdown = true;
            }
            if converged || breakdown {
                break;
            }
            v.push(w.iter().map(|wi| wi / hnext).collect());
        }

        // back substitution for the least-squares coefficients
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= h[l][i] * y[l];
            }
            y[i] = if h[i][i] == 0.0 { 0.0 } else { s / h[i][i] };
        }
        for (yi, zi) in y.iter().zip(&z) {
            axpy(*yi, zi, &mut x);
        }
        op.apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        beta = norm2(&r);
        if beta == 0.0 {
            converged = true;
        }
    }
    let relative_residual = beta / bnorm;
    if breakdown && relative_residual <= opts.tol {
        converged = true;
    }
    (x, SolveReport { iterations: total, relative_residual, history, converged, breakdown })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::{IdentityPreconditioner, SparseLu};
    use crate::sparse::CsrMatrix;

    #[test]
    fn identity_operator_converges_in_one_step() {
        let a = CsrMatrix::identity(6);
        let b = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let (x, rep) = fgmres(&a, &mut IdentityPreconditioner, &b, &GmresOptions::default());
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        for (p, q) in x.iter().zip(b) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 5.0), (1, 2, -1.0), (2, 2, 3.0), (2, 0, 0.5)]);
        let mut lu = SparseLu::factor(&a).unwrap();
        let (_, rep) = fgmres(&a, &mut lu, &[1.0, 0.0, -2.0], &GmresOptions::default());
        assert_eq!(rep.iterations, 1);
        assert!(rep.relative_residual < 1e-12);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = CsrMatrix::identity(3);
        let (x, rep) = fgmres(&a, &mut IdentityPreconditioner, &[0.0; 3], &GmresOptions::default());
        assert_eq!(x, vec![0.0; 3]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let n = 40;
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0 + i as f64)).collect();
        let a = CsrMatrix::from_triplets(n, n, &t);
        let b = vec![1.0; n];
        let opts = GmresOptions { max_iter: 3, ..Default::default() };
        let (_, rep) = fgmres(&a, &mut IdentityPreconditioner, &b, &opts);
        assert_eq!(rep.iterations, 3);
        assert!(!rep.converged);
    }
}
