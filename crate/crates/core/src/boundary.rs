//! Inflow data and Dirichlet elimination for velocity-pressure systems.

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::mesh::BoundaryTag;
use crate::sparse::CsrMatrix;

/// Exponential ramp rate of the inflow, 1/s.
pub const DEFAULT_RAMP_RATE: f64 = 5.0;

/// Time-dependent Dirichlet data: a Poiseuille profile on the inflow,
/// ramped as `(1 - exp(-rate t))`, and no-slip on walls and obstacle.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    /// Steady values on all velocity dofs (zero away from the inflow).
    pub steady: Vec<f64>,
    pub ramp_rate: f64,
    pub fixed: Vec<bool>,
}

impl BoundaryData {
    pub fn poiseuille(space: &FemSpace, ramp_rate: f64) -> Self {
        let mesh = &space.mesh;
        let h = mesh.geometry.half_height;
        let inflow = mesh.nodes_with_tags(&[BoundaryTag::Inflow]);
        let noslip = mesh.nodes_with_tags(&[BoundaryTag::Wall, BoundaryTag::Obstacle]);
        let mut steady = vec![0.0; space.dofs.n_u];
        for (n, p) in mesh.nodes.iter().enumerate() {
            if inflow[n] && !noslip[n] {
                steady[n] = 1.0 - (p[1] / h).powi(2);
            }
        }
        BoundaryData { steady, ramp_rate, fixed: space.dofs.dirichlet.clone() }
    }

    /// Boundary data held at zero for all time.
    pub fn homogeneous(space: &FemSpace) -> Self {
        BoundaryData { steady: vec![0.0; space.dofs.n_u], ramp_rate: DEFAULT_RAMP_RATE, fixed: space.dofs.dirichlet.clone() }
    }

    pub fn ramp(&self, t: f64) -> f64 {
        if self.ramp_rate.is_infinite() {
            return 1.0;
        }
        -(-self.ramp_rate * t).exp_m1()
    }

    /// Dirichlet values at time `t` on all velocity dofs (zero on free dofs).
    pub fn values(&self, t: f64) -> Vec<f64> {
        let r = self.ramp(t);
        self.steady.iter().map(|v| r * v).collect()
    }
}

/// Velocity-pressure block system `[F Bᵀ; B 0] [u; p] = [f; g]`.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub velocity: CsrMatrix,
    pub divergence: CsrMatrix,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
}

impl SaddleSystem {
    pub fn n_u(&self) -> usize {
        self.velocity.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.divergence.nrows()
    }

    /// Assembled monolithic matrix.
    pub fn monolithic(&self) -> CsrMatrix {
        let bt = self.divergence.transpose();
        CsrMatrix::from_blocks(&[vec![Some(&self.velocity), Some(&bt)], vec![Some(&self.divergence), None]])
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut r = self.rhs_u.clone();
        r.extend_from_slice(&self.rhs_p);
        r
    }
}

/// Lifts Dirichlet values into the right-hand side and replaces the
/// constrained rows and columns by the identity.
///
/// `values` must be finite on every constrained dof.
pub fn apply_dirichlet(system: &SaddleSystem, fixed: &[bool], values: &[f64]) -> Result<SaddleSystem> {
    let n_u = system.n_u();
    if fixed.len() != n_u || values.len() != n_u {
        return Err(Error::Dimension(format!("boundary arrays of length {}/{} for n_u = {n_u}", fixed.len(), values.len())));
    }
    if let Some(i) = (0..n_u).find(|&i| fixed[i] && !values[i].is_finite()) {
        return Err(Error::Dimension(format!("missing boundary value for constrained dof {i}")));
    }
    let lift: Vec<f64> = (0..n_u).map(|i| if fixed[i] { values[i] } else { 0.0 }).collect();
    let mut rhs_u = system.rhs_u.clone();
    system.velocity.matvec_add(-1.0, &lift, &mut rhs_u);
    for i in 0..n_u {
        if fixed[i] {
            rhs_u[i] = values[i];
        }
    }
    let mut rhs_p = system.rhs_p.clone();
    system.divergence.matvec_add(-1.0, &lift, &mut rhs_p);

    let mut velocity = system.velocity.clone();
    velocity.constrain_symmetric(fixed);
    let mut divergence = system.divergence.clone();
    divergence.clear_columns(fixed);
    Ok(SaddleSystem { velocity, divergence, rhs_u, rhs_p })
}
