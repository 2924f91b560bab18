//! Sparse linear algebra kernels used by the flow solvers.

mod chebyshev;
mod gmres;
mod lu;

pub use chebyshev::{chebyshev_mass_solve, ChebyshevBounds, ChebyshevSolver};
pub use gmres::{fgmres, GmresOptions, SolveReport};
pub use lu::{reverse_cuthill_mckee, SparseLu};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sparse::CsrMatrix;

/// A square linear map.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

/// Approximate inverse applied to residuals. May change between calls.
pub trait Preconditioner {
    /// `z ≈ A⁻¹ r`; `z` is overwritten.
    fn apply(&mut self, r: &[f64], z: &mut [f64]);
}

/// No preconditioning.
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

impl Preconditioner for SparseLu {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        self.solve_into(r, z);
    }
}

/// Choice of solver for a sub-block inside a preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InnerSolverKind {
    /// Sparse LU factorization (exact solve).
    Lu,
    /// A fixed number of symmetric Gauss-Seidel sweeps from a zero guess.
    SymmetricGaussSeidel { sweeps: usize },
}

impl Default for InnerSolverKind {
    fn default() -> Self {
        InnerSolverKind::Lu
    }
}

/// A built inner solver.
#[derive(Debug, Clone)]
pub enum InnerSolver {
    Lu(SparseLu),
    SymmetricGaussSeidel { matrix: CsrMatrix, diag: Vec<f64>, sweeps: usize },
}

impl InnerSolver {
    pub fn build(kind: InnerSolverKind, matrix: &CsrMatrix) -> Result<Self> {
        Ok(match kind {
            InnerSolverKind::Lu => InnerSolver::Lu(SparseLu::factor(matrix)?),
            InnerSolverKind::SymmetricGaussSeidel { sweeps } => {
                let diag = matrix.diagonal();
                if let Some(i) = diag.iter().position(|&d| d == 0.0) {
                    return Err(crate::error::Error::SingularPivot { column: i });
                }
                InnerSolver::SymmetricGaussSeidel { matrix: matrix.clone(), diag, sweeps: sweeps.max(1) }
            }
        })
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        match self {
            InnerSolver::Lu(lu) => lu.solve_into(b, x),
            InnerSolver::SymmetricGaussSeidel { matrix, diag, sweeps } => {
                x.iter_mut().for_each(|v| *v = 0.0);
                let n = diag.len();
                for _ in 0..*sweeps {
                    for i in 0..n {
                        gs_update(matrix, diag, b, x, i);
                    }
                    for i in (0..n).rev() {
                        gs_update(matrix, diag, b, x, i);
                    }
                }
            }
        }
    }
}

fn gs_update(a: &CsrMatrix, diag: &[f64], b: &[f64], x: &mut [f64], i: usize) {
    let mut s = b[i];
    for (j, v) in a.row(i) {
        if j != i {
            s -= v * x[j];
        }
    }
    x[i] = s / diag[i];
}
