//! Taylor-Hood (Q2 velocity, Q1 pressure) assembly on quadrilaterals.
//!
//! All Q2-Q2 matrices (mass, diffusion, convection) are assembled as scalar
//! matrices of order `n_nodes` that act identically on both velocity
//! components; [`FemSpace::vector_operator`] expands them to order `n_u` when
//! an explicit vector operator is wanted. Matrices assembled on the same
//! element pairing share one sparsity pattern, and per-element scatter tables
//! let repeated assemblies (the convection matrix every time step) write
//! straight into the value array in a fixed element order.

use std::sync::Arc;

use crate::mesh::{DofMap, Mesh};
use crate::sparse::{CsrMatrix, Pattern};

const GAUSS_POINTS: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
pub const N_QP: usize = 9;

fn lagrange2(s: f64) -> [f64; 3] {
    [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)]
}

fn lagrange2_deriv(s: f64) -> [f64; 3] {
    [s - 0.5, -2.0 * s, s + 0.5]
}

fn lagrange1(s: f64) -> [f64; 2] {
    [0.5 * (1.0 - s), 0.5 * (1.0 + s)]
}

fn lagrange1_deriv(_s: f64) -> [f64; 2] {
    [-0.5, 0.5]
}

/// Q2 shape function values at reference point (s, t), tensor order `3*b + a`.
pub fn q2_shape(s: f64, t: f64) -> [f64; 9] {
    let (ls, lt) = (lagrange2(s), lagrange2(t));
    let mut out = [0.0; 9];
    for b in 0..3 {
        for a in 0..3 {
            out[3 * b + a] = ls[a] * lt[b];
        }
    }
    out
}

/// Q2 reference gradients at (s, t).
pub fn q2_shape_grad(s: f64, t: f64) -> [[f64; 2]; 9] {
    let (ls, lt) = (lagrange2(s), lagrange2(t));
    let (ds, dt) = (lagrange2_deriv(s), lagrange2_deriv(t));
    let mut out = [[0.0; 2]; 9];
    for b in 0..3 {
        for a in 0..3 {
            out[3 * b + a] = [ds[a] * lt[b], ls[a] * dt[b]];
        }
    }
    out
}

/// Q1 shape function values at (s, t), order `2*b + a`.
pub fn q1_shape(s: f64, t: f64) -> [f64; 4] {
    let (ls, lt) = (lagrange1(s), lagrange1(t));
    [ls[0] * lt[0], ls[1] * lt[0], ls[0] * lt[1], ls[1] * lt[1]]
}

fn q1_shape_grad(s: f64, t: f64) -> [[f64; 2]; 4] {
    let (ls, lt) = (lagrange1(s), lagrange1(t));
    let (ds, dt) = (lagrange1_deriv(s), lagrange1_deriv(t));
    [
        [ds[0] * lt[0], ls[0] * dt[0]],
        [ds[1] * lt[0], ls[1] * dt[0]],
        [ds[0] * lt[1], ls[0] * dt[1]],
        [ds[1] * lt[1], ls[1] * dt[1]],
    ]
}

/// 3x3 tensor Gauss rule on [-1, 1]^2 as (s, t, weight).
pub fn gauss_3x3() -> [(f64, f64, f64); N_QP] {
    let mut out = [(0.0, 0.0, 0.0); N_QP];
    for j in 0..3 {
        for i in 0..3 {
            out[3 * j + i] = (GAUSS_POINTS[i], GAUSS_POINTS[j], GAUSS_WEIGHTS[i] * GAUSS_WEIGHTS[j]);
        }
    }
    out
}

/// Quadrature data of one element, mapped to physical coordinates.
#[derive(Debug, Clone)]
struct ElementData {
    jxw: [f64; N_QP],
    grad2: [[[f64; 2]; 9]; N_QP],
    grad1: [[[f64; 2]; 4]; N_QP],
}

/// Finite-element space with cached quadrature data, sparsity patterns and
/// scatter tables.
#[derive(Debug, Clone)]
pub struct FemSpace {
    pub mesh: Mesh,
    pub dofs: DofMap,
    phi2: [[f64; 9]; N_QP],
    phi1: [[f64; 4]; N_QP],
    elements: Vec<ElementData>,
    q2_pattern: Arc<Pattern>,
    q1_pattern: Arc<Pattern>,
    div_pattern: Arc<Pattern>,
    q2_scatter: Vec<[usize; 81]>,
    q1_scatter: Vec<[usize; 16]>,
    div_scatter: Vec<[usize; 72]>,
}

impl FemSpace {
    /// Panics if an element has a non-positive Jacobian at a quadrature point.
    pub fn new(mesh: Mesh) -> Self {
        let dofs = DofMap::new(&mesh);
        let rule = gauss_3x3();
        let mut phi2 = [[0.0; 9]; N_QP];
        let mut phi1 = [[0.0; 4]; N_QP];
        for (q, &(s, t, _)) in rule.iter().enumerate() {
            phi2[q] = q2_shape(s, t);
            phi1[q] = q1_shape(s, t);
        }
        let elements = (0..mesh.n_elements()).map(|e| element_data(&mesh, e)).collect();

        let nn = mesh.n_nodes();
        let np = mesh.n_pressure();
        let q2_pattern = Arc::new(Pattern::from_entries(
            nn,
            nn,
            mesh.elements.iter().flat_map(|c| c.iter().flat_map(move |&i| c.iter().map(move |&j| (i, j)))),
        ));
        let q1_pattern = Arc::new(Pattern::from_entries(
            np,
            np,
            mesh.element_pressure.iter().flat_map(|c| c.iter().flat_map(move |&i| c.iter().map(move |&j| (i, j)))),
        ));
        let div_pattern = Arc::new(Pattern::from_entries(
            np,
            2 * nn,
            mesh.elements.iter().zip(&mesh.element_pressure).flat_map(|(c, pc)| {
                pc.iter().flat_map(move |&i| c.iter().flat_map(move |&j| [(i, j), (i, nn + j)]))
            }),
        ));
        let q2_scatter = mesh
            .elements
            .iter()
            .map(|c| {
                let mut s = [0usize; 81];
                for a in 0..9 {
                    for b in 0..9 {
                        s[9 * a + b] = q2_pattern.find(c[a], c[b]).unwrap();
                    }
                }
                s
            })
            .collect();
        let q1_scatter = mesh
            .element_pressure
            .iter()
            .map(|c| {
                let mut s = [0usize; 16];
                for a in 0..4 {
                    for b in 0..4 {
                        s[4 * a + b] = q1_pattern.find(c[a], c[b]).unwrap();
                    }
                }
                s
            })
            .collect();
        let div_scatter = mesh
            .elements
            .iter()
            .zip(&mesh.element_pressure)
            .map(|(c, pc)| {
                let mut s = [0usize; 72];
                for a in 0..4 {
                    for b in 0..9 {
                        s[18 * a + b] = div_pattern.find(pc[a], c[b]).unwrap();
                        s[18 * a + 9 + b] = div_pattern.find(pc[a], nn + c[b]).unwrap();
                    }
                }
                s
            })
            .collect();

        FemSpace { mesh, dofs, phi2, phi1, elements, q2_pattern, q1_pattern, div_pattern, q2_scatter, q1_scatter, div_scatter }
    }

    pub fn n_nodes(&self) -> usize {
        self.dofs.n_nodes
    }

    pub fn q2_pattern(&self) -> &Arc<Pattern> {
        &self.q2_pattern
    }

    pub fn q1_pattern(&self) -> &Arc<Pattern> {
        &self.q1_pattern
    }

    /// Domain area by quadrature.
    pub fn area(&self) -> f64 {
        self.elements.iter().map(|e| e.jxw.iter().sum::<f64>()).sum()
    }

    /// Scalar Q2 mass matrix `∫ φ_b φ_a`.
    pub fn scalar_mass(&self) -> CsrMatrix {
        let mut m = CsrMatrix::zeros(self.q2_pattern.clone());
        let vals = m.values_mut();
        for (e, ed) in self.elements.iter().enumerate() {
            let sc = &self.q2_scatter[e];
            for q in 0..N_QP {
                let w = ed.jxw[q];
                let phi = &self.phi2[q];
                for a in 0..9 {
                    for b in 0..9 {
                        vals[sc[9 * a + b]] += w * (phi[a] * phi[b]);
                    }
                }
            }
        }
        m
    }

    /// Scalar diffusion matrix `∫ c ∇φ_b · ∇φ_a` with `c` given at Q2 nodes.
    pub fn scalar_diffusion(&self, coefficient: &[f64]) -> CsrMatrix {
        assert_eq!(coefficient.len(), self.n_nodes(), "coefficient must be a nodal Q2 field");
        let mut m = CsrMatrix::zeros(self.q2_pattern.clone());
        let vals = m.values_mut();
        for (e, ed) in self.elements.iter().enumerate() {
            let conn = &self.mesh.elements[e];
            let sc = &self.q2_scatter[e];
            for q in 0..N_QP {
                let c: f64 = (0..9).map(|a| self.phi2[q][a] * coefficient[conn[a]]).sum();
                let w = ed.jxw[q] * c;
                let g = &ed.grad2[q];
                for a in 0..9 {
                    for b in 0..9 {
                        vals[sc[9 * a + b]] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    }
                }
            }
        }
        m
    }

    /// Scalar convection matrix `∫ (w · ∇φ_b) φ_a` for a velocity vector `w`
    /// of length `n_u`.
    pub fn scalar_convection(&self, wind: &[f64]) -> CsrMatrix {
        let mut m = CsrMatrix::zeros(self.q2_pattern.clone());
        self.scalar_convection_into(wind, &mut m);
        m
    }

    /// Reassembles a convection matrix in place; `m` must live on the Q2 pattern.
    pub fn scalar_convection_into(&self, wind: &[f64], m: &mut CsrMatrix) {
        let nn = self.n_nodes();
        assert_eq!(wind.len(), 2 * nn, "wind must have length n_u");
        assert!(Arc::ptr_eq(m.pattern(), &self.q2_pattern), "convection target must use the Q2 pattern");
        let vals = m.values_mut();
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (e, ed) in self.elements.iter().enumerate() {
            let conn = &self.mesh.elements[e];
            let sc = &self.q2_scatter[e];
            let mut wx = [0.0; 9];
            let mut wy = [0.0; 9];
            for a in 0..9 {
                wx[a] = wind[conn[a]];
                wy[a] = wind[nn + conn[a]];
            }
            if wx.iter().chain(&wy).all(|&v| v == 0.0) {
                continue;
            }
            for q in 0..N_QP {
                let phi = &self.phi2[q];
                let (mut uq, mut vq) = (0.0, 0.0);
                for a in 0..9 {
                    uq += phi[a] * wx[a];
                    vq += phi[a] * wy[a];
                }
                let g = &ed.grad2[q];
                let mut adv = [0.0; 9];
                for b in 0..9 {
                    adv[b] = ed.jxw[q] * (uq * g[b][0] + vq * g[b][1]);
                }
                for a in 0..9 {
                    for b in 0..9 {
                        vals[sc[9 * a + b]] += phi[a] * adv[b];
                    }
                }
            }
        }
    }

    /// Divergence matrix `b_cd = -∫ ψ_c ∇·φ_d`, of shape `n_p x n_u`.
    pub fn divergence(&self) -> CsrMatrix {
        let mut m = CsrMatrix::zeros(self.div_pattern.clone());
        let vals = m.values_mut();
        for (e, ed) in self.elements.iter().enumerate() {
            let sc = &self.div_scatter[e];
            for q in 0..N_QP {
                let g = &ed.grad2[q];
                for a in 0..4 {
                    let w = -ed.jxw[q] * self.phi1[q][a];
                    for b in 0..9 {
                        vals[sc[18 * a + b]] += w * g[b][0];
                        vals[sc[18 * a + 9 + b]] += w * g[b][1];
                    }
                }
            }
        }
        m
    }

    /// Q1 pressure mass matrix.
    pub fn pressure_mass(&self) -> CsrMatrix {
        let mut m = CsrMatrix::zeros(self.q1_pattern.clone());
        let vals = m.values_mut();
        for (e, ed) in self.elements.iter().enumerate() {
            let sc = &self.q1_scatter[e];
            for q in 0..N_QP {
                let phi = &self.phi1[q];
                for a in 0..4 {
                    for b in 0..4 {
                        vals[sc[4 * a + b]] += ed.jxw[q] * (phi[a] * phi[b]);
                    }
                }
            }
        }
        m
    }

    /// Q1 diffusion matrix with a nodal Q2 coefficient field.
    pub fn pressure_diffusion(&self, coefficient: &[f64]) -> CsrMatrix {
        assert_eq!(coefficient.len(), self.n_nodes());
        let mut m = CsrMatrix::zeros(self.q1_pattern.clone());
        let vals = m.values_mut();
        for (e, ed) in self.elements.iter().enumerate() {
            let conn = &self.mesh.elements[e];
            let sc = &self.q1_scatter[e];
            for q in 0..N_QP {
                let c: f64 = (0..9).map(|a| self.phi2[q][a] * coefficient[conn[a]]).sum();
                let g = &ed.grad1[q];
                for a in 0..4 {
                    for b in 0..4 {
                        vals[sc[4 * a + b]] += ed.jxw[q] * c * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    }
                }
            }
        }
        m
    }

    /// Q1 convection matrix `∫ (w · ∇ψ_b) ψ_a` for a Q2 velocity `w`.
    pub fn pressure_convection(&self, wind: &[f64]) -> CsrMatrix {
        let nn = self.n_nodes();
        assert_eq!(wind.len(), 2 * nn);
        let mut m = CsrMatrix::zeros(self.q1_pattern.clone());
        let vals = m.values_mut();
        for (e, ed) in self.elements.iter().enumerate() {
            let conn = &self.mesh.elements[e];
            let sc = &self.q1_scatter[e];
            for q in 0..N_QP {
                let (mut uq, mut vq) = (0.0, 0.0);
                for a in 0..9 {
                    uq += self.phi2[q][a] * wind[conn[a]];
                    vq += self.phi2[q][a] * wind[nn + conn[a]];
                }
                let g = &ed.grad1[q];
                for a in 0..4 {
                    for b in 0..4 {
                        vals[sc[4 * a + b]] += ed.jxw[q] * self.phi1[q][a] * (uq * g[b][0] + vq * g[b][1]);
                    }
                }
            }
        }
        m
    }

    /// Expands a scalar Q2 matrix to the block-diagonal vector operator of order `n_u`.
    pub fn vector_operator(&self, scalar: &CsrMatrix) -> CsrMatrix {
        scalar.block_diagonal(2)
    }

    /// Velocity mass matrix of order `n_u`.
    pub fn assemble_mass(&self) -> CsrMatrix {
        self.vector_operator(&self.scalar_mass())
    }

    /// Velocity diffusion matrix of order `n_u` with nodal coefficient.
    pub fn assemble_diffusion(&self, coefficient: &[f64]) -> CsrMatrix {
        self.vector_operator(&self.scalar_diffusion(coefficient))
    }

    /// Velocity convection matrix of order `n_u` for the given wind.
    pub fn assemble_convection(&self, wind: &[f64]) -> CsrMatrix {
        self.vector_operator(&self.scalar_convection(wind))
    }

    /// Interpolates a velocity vector (length `n_u`) at a physical point.
    pub fn velocity_at(&self, u: &[f64], x: f64, y: f64) -> Option<[f64; 2]> {
        let (e, [s, t]) = self.mesh.locate(x, y)?;
        let phi = q2_shape(s, t);
        let conn = &self.mesh.elements[e];
        let nn = self.n_nodes();
        let mut out = [0.0; 2];
        for a in 0..9 {
            out[0] += phi[a] * u[conn[a]];
            out[1] += phi[a] * u[nn + conn[a]];
        }
        Some(out)
    }

    /// Interpolation weights (node, weight) of the Q2 field at a point.
    pub fn point_weights(&self, x: f64, y: f64) -> Option<Vec<(usize, f64)>> {
        let (e, [s, t]) = self.mesh.locate(x, y)?;
        let phi = q2_shape(s, t);
        Some(self.mesh.elements[e].iter().copied().zip(phi).collect())
    }

    /// Nodal Q2 interpolant of a function.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.mesh.nodes.iter().map(|p| f(p[0], p[1])).collect()
    }
}

fn element_data(mesh: &Mesh, e: usize) -> ElementData {
    let conn = &mesh.elements[e];
    let corners = [mesh.nodes[conn[0]], mesh.nodes[conn[2]], mesh.nodes[conn[6]], mesh.nodes[conn[8]]];
    let rule = gauss_3x3();
    let mut jxw = [0.0; N_QP];
    let mut grad2 = [[[0.0; 2]; 9]; N_QP];
    let mut grad1 = [[[0.0; 2]; 4]; N_QP];
    for (q, &(s, t, w)) in rule.iter().enumerate() {
        let dq1 = q1_shape_grad(s, t);
        // bilinear geometry map
        let mut jac = [[0.0; 2]; 2];
        for (k, c) in corners.iter().enumerate() {
            for r in 0..2 {
                jac[r][0] += c[r] * dq1[k][0];
                jac[r][1] += c[r] * dq1[k][1];
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        assert!(det > 0.0, "element {e} has non-positive Jacobian {det}");
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        let map = |g: [f64; 2]| [g[0] * inv[0][0] + g[1] * inv[1][0], g[0] * inv[0][1] + g[1] * inv[1][1]];
        jxw[q] = det * w;
        for (a, g) in q2_shape_grad(s, t).into_iter().enumerate() {
            grad2[q][a] = map(g);
        }
        for (a, g) in dq1.into_iter().enumerate() {
            grad1[q][a] = map(g);
        }
    }
    ElementData { jxw, grad2, grad1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_obstacle_mesh, DEFAULT_OBSTACLE};

    fn space() -> FemSpace {
        FemSpace::new(generate_obstacle_mesh(4.0, 1.0, Some(DEFAULT_OBSTACLE), 1).unwrap())
    }

    #[test]
    fn shape_functions_partition_unity() {
        for &(s, t) in &[(0.3, -0.7), (-1.0, 1.0), (0.0, 0.0)] {
            assert!((q2_shape(s, t).iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!((q1_shape(s, t).iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let g: [f64; 2] = q2_shape_grad(s, t).iter().fold([0.0, 0.0], |acc, g| [acc[0] + g[0], acc[1] + g[1]]);
            assert!(g[0].abs() < 1e-14 && g[1].abs() < 1e-14);
        }
    }

    #[test]
    fn mass_block_sums_to_area() {
        let sp = space();
        let m = sp.assemble_mass();
        let n = sp.n_nodes();
        let block: f64 = (0..n).flat_map(|i| m.row(i).filter(|&(j, _)| j < n).map(|(_, v)| v).collect::<Vec<_>>()).sum();
        assert!((block - sp.mesh.geometry.area()).abs() < 1e-12);
        assert!((sp.area() - sp.mesh.geometry.area()).abs() < 1e-12);
    }

    #[test]
    fn mass_is_exactly_symmetric() {
        let m = space().scalar_mass();
        for i in 0..m.nrows() {
            for (j, v) in m.row(i) {
                assert_eq!(v, m.get(j, i));
            }
        }
    }

    #[test]
    fn convection_vanishes_for_zero_wind() {
        let sp = space();
        let n = sp.scalar_convection(&vec![0.0; sp.dofs.n_u]);
        assert_eq!(n.max_abs(), 0.0);
    }

    #[test]
    fn pressure_mass_sums_to_area() {
        let sp = space();
        let total: f64 = sp.pressure_mass().values().iter().sum();
        assert!((total - sp.mesh.geometry.area()).abs() < 1e-12);
    }

    #[test]
    fn velocity_interpolation_reproduces_quadratics() {
        let sp = space();
        let nn = sp.n_nodes();
        let mut u = vec![0.0; 2 * nn];
        for (i, p) in sp.mesh.nodes.iter().enumerate() {
            u[i] = 1.0 - p[1] * p[1];
            u[nn + i] = p[0] * p[1];
        }
        let v = sp.velocity_at(&u, 3.1, 0.37).unwrap();
        assert!((v[0] - (1.0 - 0.37 * 0.37)).abs() < 1e-13);
        assert!((v[1] - 3.1 * 0.37).abs() < 1e-13);
    }
}
