//! Mean-based pressure convection-diffusion preconditioner.
//!
//! Built from the mean (first-mode) Oseen block only and applied to every
//! chaos column independently:
//! `p = −A_p⁻¹ F_p M_p⁻¹ r_p`, `u = F⁻¹ (r_u − Bᵀ p)`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::FemSpace;
use crate::krylov::{ChebyshevSolver, InnerSolver, InnerSolverKind, Preconditioner, SparseLu};
use crate::mesh::BoundaryTag;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcdMode {
    /// LU factorizations of every sub-block.
    ExactLu,
    /// Inner-solver slot for `F` and `A_p`, Chebyshev steps for `M_p`.
    Iterated,
    /// Exact solve with the mean saddle-point matrix instead of PCD.
    MeanSaddleLu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcdSettings {
    pub mode: PcdMode,
    /// Solver used for `F` and `A_p` in iterated mode.
    pub inner: InnerSolverKind,
    pub chebyshev_steps: usize,
    /// Treat inflow pressure nodes of `F_p` as Dirichlet nodes.
    pub inflow_dirichlet: bool,
}

impl Default for PcdSettings {
    fn default() -> Self {
        PcdSettings { mode: PcdMode::ExactLu, inner: InnerSolverKind::Lu, chebyshev_steps: 5, inflow_dirichlet: false }
    }
}

enum MassSolver {
    Lu(SparseLu),
    Chebyshev(ChebyshevSolver),
}

/// Time-independent parts of the preconditioner.
pub struct PcdFactors {
    pub settings: PcdSettings,
    ap: InnerSolver,
    mp_solver: MassSolver,
    /// Pressure mass matrix.
    pub mp: CsrMatrix,
    /// Pressure diffusion with the mean viscosity.
    pub lp: CsrMatrix,
    inflow_pressure: Vec<bool>,
}

impl std::fmt::Debug for PcdFactors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PcdFactors").field("settings", &self.settings).finish_non_exhaustive()
    }
}

/// `B T⁻¹ Bᵀ` with `T` the diagonal of the velocity mass matrix.
pub fn scaled_pressure_laplacian(divergence: &CsrMatrix, mass_diag: &[f64]) -> CsrMatrix {
    let bt = divergence.transpose();
    let np = divergence.nrows();
    let mut triplets = Vec::new();
    for d in 0..bt.nrows() {
        let col: Vec<(usize, f64)> = bt.row(d).filter(|&(_, v)| v != 0.0).collect();
        let w = 1.0 / mass_diag[d];
        for &(i, bi) in &col {
            for &(j, bj) in &col {
                triplets.push((i, j, w * bi * bj));
            }
        }
    }
    // keep the diagonal in the pattern even for isolated rows
    for i in 0..np {
        triplets.push((i, i, 0.0));
    }
    CsrMatrix::from_triplets(np, np, &triplets)
}

impl PcdFactors {
    /// `divergence` must already have its Dirichlet columns cleared;
    /// `mass_diag` is the diagonal of the velocity mass matrix.
    pub fn new(space: &FemSpace, divergence: &CsrMatrix, mass_diag: &[f64], mean_viscosity: &[f64], settings: PcdSettings) -> Result<Self> {
        let ap_matrix = scaled_pressure_laplacian(divergence, mass_diag);
        let mp = space.pressure_mass();
        let lp = space.pressure_diffusion(mean_viscosity);
        let (ap, mp_solver) = match settings.mode {
            PcdMode::ExactLu | PcdMode::MeanSaddleLu => (InnerSolver::build(InnerSolverKind::Lu, &ap_matrix)?, MassSolver::Lu(SparseLu::factor(&mp)?)),
            PcdMode::Iterated => (
                InnerSolver::build(settings.inner, &ap_matrix)?,
                MassSolver::Chebyshev(ChebyshevSolver::with_estimated_bounds(mp.clone(), settings.chebyshev_steps)?),
            ),
        };
        let inflow_nodes = space.mesh.nodes_with_tags(&[BoundaryTag::Inflow]);
        let mut inflow_pressure = vec![false; space.mesh.n_pressure()];
        for (corners, pc) in space.mesh.elements.iter().zip(&space.mesh.element_pressure) {
            for (c, &q) in [corners[0], corners[2], corners[6], corners[8]].iter().zip(pc) {
                if inflow_nodes[*c] {
                    inflow_pressure[q] = true;
                }
            }
        }
        Ok(PcdFactors { settings, ap, mp_solver, mp, lp, inflow_pressure })
    }

    /// `F_p = 2 M_p + k (L_p + N_p(w))` for the mean wind `w`.
    pub fn pressure_operator(&self, space: &FemSpace, k: f64, mean_wind: &[f64]) -> CsrMatrix {
        let np_conv = space.pressure_convection(mean_wind);
        let mut fp = CsrMatrix::linear_combination(&[(2.0, &self.mp), (k, &self.lp), (k, &np_conv)]);
        if self.settings.inflow_dirichlet {
            let fixed = &self.inflow_pressure;
            let rp = fp.row_ptr().to_vec();
            let ci = fp.col_idx().to_vec();
            let vals = fp.values_mut();
            for i in 0..fixed.len() {
                for p in rp[i]..rp[i + 1] {
                    if (fixed[i] || fixed[ci[p]]) && ci[p] != i {
                        vals[p] = 0.0;
                    }
                }
            }
        }
        fp
    }

    fn solve_mass(&self, r: &[f64], z: &mut [f64]) {
        match &self.mp_solver {
            MassSolver::Lu(lu) => lu.solve_into(r, z),
            MassSolver::Chebyshev(c) => c.solve_into(r, z),
        }
    }
}

/// Per-step solver for the mean block.
pub enum MeanBlockSolver {
    /// Block-triangular PCD approximation: scalar velocity solver (applied
    /// per component) and the assembled `F_p`.
    Pcd { velocity: InnerSolver, fp: CsrMatrix },
    /// LU of the whole mean saddle-point matrix.
    Saddle(SparseLu),
}

/// Preconditioner for one time step.
pub struct MeanBasedPcd<'a> {
    pub factors: &'a PcdFactors,
    pub mean: MeanBlockSolver,
    /// `Bᵀ` with Dirichlet rows cleared.
    pub divergence_t: &'a CsrMatrix,
    pub n_nodes: usize,
    pub n_pressure: usize,
    pub n_modes: usize,
}

impl MeanBasedPcd<'_> {
    /// Applies the block preconditioner to one `[u_x; u_y; p]` column.
    pub fn apply_column(&self, r: &[f64], z: &mut [f64]) {
        let nn = self.n_nodes;
        let nu = 2 * nn;
        let np = self.n_pressure;
        let (velocity, fp) = match &self.mean {
            MeanBlockSolver::Saddle(lu) => {
                lu.solve_into(r, z);
                return;
            }
            MeanBlockSolver::Pcd { velocity, fp } => (velocity, fp),
        };
        let mut t1 = vec![0.0; np];
        let mut t2 = vec![0.0; np];
        let (zu, zp) = z.split_at_mut(nu);
        self.factors.solve_mass(&r[nu..], &mut t1);
        fp.matvec(&t1, &mut t2);
        self.factors.ap.solve_into(&t2, zp);
        zp.iter_mut().for_each(|v| *v = -*v);
        let mut ru = r[..nu].to_vec();
        self.divergence_t.matvec_add(-1.0, zp, &mut ru);
        velocity.solve_into(&ru[..nn], &mut zu[..nn]);
        velocity.solve_into(&ru[nn..], &mut zu[nn..]);
    }
}

impl Preconditioner for MeanBasedPcd<'_> {
    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        let nx = 2 * self.n_nodes + self.n_pressure;
        for j in 0..self.n_modes {
            let cols = j * nx..(j + 1) * nx;
            if r[cols.clone()].iter().all(|&v| v == 0.0) {
                z[cols].iter_mut().for_each(|v| *v = 0.0);
            } else {
                self.apply_column(&r[cols.clone()], &mut z[cols]);
            }
        }
    }
}
