//! Stochastic Galerkin Oseen systems.
//!
//! The velocity and pressure are expanded in `n_ξ` chaos polynomials and the
//! viscosity in `n_ν`; the coupled operator is `Σ_ℓ H_ℓ ⊗ F_ℓ` with the
//! divergence constraint attached to the mean term only. A deterministic flow
//! is the special case of a single chaos mode with `H_0 = [1]`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryData;
use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::gpc::TripleProductTensor;
use crate::krylov::{fgmres, GmresOptions, InnerSolver, InnerSolverKind, LinearOperator, SolveReport, SparseLu};
use crate::pcd::{MeanBasedPcd, MeanBlockSolver, PcdFactors, PcdMode, PcdSettings};
use crate::sparse::{norm2, CsrMatrix};
use crate::stepper::{FlowSystem, StepRecord, StepSchedule};

/// Linear solver configuration for the Oseen systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSolverSettings {
    /// Sparse LU of the full saddle-point matrix (single-mode systems only).
    pub direct: bool,
    pub gmres: GmresOptions,
    pub pcd: PcdSettings,
}

impl Default for LinearSolverSettings {
    fn default() -> Self {
        LinearSolverSettings { direct: false, gmres: GmresOptions::default(), pcd: PcdSettings::default() }
    }
}

/// Tensor for a single chaos mode: `H_0 = [1]`.
pub fn single_mode_tensor() -> TripleProductTensor {
    TripleProductTensor { n_xi: 1, matrices: vec![vec![(0, 0, 1.0)]] }
}

/// Adds `alpha Σ_ℓ (H_ℓ ⊗ G_ℓ) x` to `y` for velocity-only block vectors.
///
/// `x` and `y` hold `n_ξ` columns of length `stride`; each column starts
/// with the two velocity components of length `n_nodes` each. The scalar
/// blocks act on each component separately.
pub fn apply_velocity_blocks(tensor: &TripleProductTensor, blocks: &[Option<CsrMatrix>], n_nodes: usize, stride: usize, alpha: f64, x: &[f64], y: &mut [f64]) {
    let nn = n_nodes;
    let mut tmp = vec![0.0; 2 * nn];
    for (h, block) in tensor.matrices.iter().zip(blocks) {
        let Some(g) = block else { continue };
        let mut current = usize::MAX;
        for &(j, k, v) in h {
            if j != current {
                current = j;
                let xj = &x[j * stride..j * stride + 2 * nn];
                g.matvec(&xj[..nn], &mut tmp[..nn]);
                g.matvec(&xj[nn..], &mut tmp[nn..]);
            }
            let yk = &mut y[k * stride..k * stride + 2 * nn];
            let s = alpha * v;
            yk.iter_mut().zip(&tmp).for_each(|(y, t)| *y += s * t);
        }
    }
}

/// Galerkin Oseen operator on column-major `[u_x; u_y; p]` blocks.
#[derive(Debug, Clone)]
pub struct SgOseenOperator {
    pub tensor: Arc<TripleProductTensor>,
    /// Scalar velocity blocks `F_ℓ`; `None` marks a zero block.
    pub blocks: Vec<Option<CsrMatrix>>,
    /// Column couplings `(j, k, Σ_ℓ h_{ℓ,jk} F_ℓ)`, nonzero pairs only.
    coupled: Vec<(usize, usize, CsrMatrix)>,
    pub divergence: CsrMatrix,
    pub divergence_t: CsrMatrix,
    pub n_nodes: usize,
    pub n_pressure: usize,
}

impl SgOseenOperator {
    pub fn new(tensor: Arc<TripleProductTensor>, blocks: Vec<Option<CsrMatrix>>, divergence: CsrMatrix) -> Self {
        let divergence_t = divergence.transpose();
        Self::with_transpose(tensor, blocks, divergence, divergence_t)
    }

    fn with_transpose(tensor: Arc<TripleProductTensor>, blocks: Vec<Option<CsrMatrix>>, divergence: CsrMatrix, divergence_t: CsrMatrix) -> Self {
        let n_nodes = divergence.ncols() / 2;
        let n_pressure = divergence.nrows();
        let mut terms: std::collections::BTreeMap<(usize, usize), Vec<(f64, &CsrMatrix)>> = Default::default();
        for (h, block) in tensor.matrices.iter().zip(&blocks) {
            if let Some(f) = block {
                for &(j, k, v) in h {
                    terms.entry((j, k)).or_default().push((v, f));
                }
            }
        }
        let coupled = terms.into_iter().map(|((j, k), t)| (j, k, CsrMatrix::linear_combination(&t))).collect();
        SgOseenOperator { tensor, blocks, coupled, divergence, divergence_t, n_nodes, n_pressure }
    }

    /// Length of one chaos column.
    pub fn column_len(&self) -> usize {
        2 * self.n_nodes + self.n_pressure
    }

    pub fn n_modes(&self) -> usize {
        self.tensor.n_xi
    }
}

impl LinearOperator for SgOseenOperator {
    fn dim(&self) -> usize {
        self.n_modes() * self.column_len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nx = self.column_len();
        let nu = 2 * self.n_nodes;
        let nn = self.n_nodes;
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, k, f) in &self.coupled {
            let xj = &x[j * nx..j * nx + nu];
            let (yx, yy) = y[k * nx..k * nx + nu].split_at_mut(nn);
            f.matvec_add_pair(1.0, &xj[..nn], &xj[nn..], yx, yy);
        }
        for j in 0..self.n_modes() {
            let col = j * nx;
            let (xu, xp) = x[col..col + nx].split_at(nu);
            let (yu, yp) = y[col..col + nx].split_at_mut(nu);
            self.divergence_t.matvec_add(1.0, xp, yu);
            self.divergence.matvec(xu, yp);
        }
    }
}

/// Galerkin Navier-Stokes system advanced by the time stepper.
pub struct SgSystem {
    pub space: Arc<FemSpace>,
    pub boundary: BoundaryData,
    pub tensor: Arc<TripleProductTensor>,
    pub settings: LinearSolverSettings,
    mass: CsrMatrix,
    diffusion: Vec<Option<CsrMatrix>>,
    divergence: CsrMatrix,
    divergence_c: CsrMatrix,
    divergence_ct: CsrMatrix,
    fixed_nodes: Vec<bool>,
    fixed_state: Vec<bool>,
    pcd: Option<PcdFactors>,
    startup: Option<SparseLu>,
    divergence_scale: f64,
    area: f64,
    /// Reports of every linear solve, in order.
    pub reports: Vec<SolveReport>,
}

impl std::fmt::Debug for SgSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SgSystem").field("n_modes", &self.n_modes()).field("settings", &self.settings).finish_non_exhaustive()
    }
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

impl SgSystem {
    /// `viscosity[ℓ]` is the nodal coefficient of the `ℓ`-th viscosity mode;
    /// at most `tensor.n_hat()` modes are used.
    pub fn new(space: Arc<FemSpace>, boundary: BoundaryData, viscosity: &[Vec<f64>], tensor: Arc<TripleProductTensor>, settings: LinearSolverSettings) -> Result<Self> {
        let nn = space.n_nodes();
        if viscosity.is_empty() || viscosity.len() > tensor.n_hat() {
            return Err(Error::Dimension(format!("{} viscosity modes for {} tensor slices", viscosity.len(), tensor.n_hat())));
        }
        if let Some(v) = viscosity.iter().find(|v| v.len() != nn) {
            return Err(Error::Dimension(format!("viscosity field of length {} on {nn} nodes", v.len())));
        }
        if settings.direct && tensor.n_xi != 1 {
            return Err(Error::config("linear_solver.direct", "the direct solver handles single-mode systems only"));
        }
        let n_xi = tensor.n_xi;
        let mass = space.scalar_mass();
        let diffusion = viscosity.iter().map(|c| if is_zero(c) { None } else { Some(space.scalar_diffusion(c)) }).collect();
        let divergence = space.divergence();
        let fixed_state_one = space.dofs.dirichlet.clone();
        let fixed_nodes = space.dofs.dirichlet_nodes.clone();
        let mut divergence_c = divergence.clone();
        divergence_c.clear_columns(&fixed_state_one);
        let divergence_ct = divergence_c.transpose();
        let fixed_state: Vec<bool> = (0..n_xi).flat_map(|_| fixed_state_one.iter().copied()).collect();

        let pcd = if settings.direct {
            None
        } else {
            let md = mass.diagonal();
            let mass_diag: Vec<f64> = md.iter().chain(&md).copied().collect();
            Some(PcdFactors::new(&space, &divergence_c, &mass_diag, &viscosity[0], settings.pcd)?)
        };
        let mut bd = vec![0.0; divergence.nrows()];
        divergence.matvec(&boundary.steady, &mut bd);
        let divergence_scale = norm2(&bd);
        let area = space.area();
        Ok(SgSystem {
            space,
            boundary,
            tensor,
            settings,
            mass,
            diffusion,
            divergence,
            divergence_c,
            divergence_ct,
            fixed_nodes,
            fixed_state,
            pcd,
            startup: None,
            divergence_scale,
            area,
            reports: Vec::new(),
        })
    }

    /// Single-mode system with a deterministic viscosity field.
    pub fn deterministic(space: Arc<FemSpace>, boundary: BoundaryData, viscosity: Vec<f64>, settings: LinearSolverSettings) -> Result<Self> {
        SgSystem::new(space, boundary, &[viscosity], Arc::new(single_mode_tensor()), settings)
    }

    pub fn n_modes(&self) -> usize {
        self.tensor.n_xi
    }

    fn n_nodes(&self) -> usize {
        self.space.n_nodes()
    }

    fn n_pressure(&self) -> usize {
        self.divergence.nrows()
    }

    /// Divergence matrix with Dirichlet columns cleared.
    pub fn constrained_divergence(&self) -> &CsrMatrix {
        &self.divergence_c
    }

    /// Unconstrained scalar blocks `A_ℓ + N(w_ℓ)` for per-mode winds.
    pub fn operator_blocks(&self, wind: &[f64]) -> Vec<Option<CsrMatrix>> {
        let nn = self.n_nodes();
        let n_hat = self.tensor.n_hat();
        (0..n_hat)
            .map(|l| {
                let a = self.diffusion.get(l).and_then(|a| a.as_ref());
                let n = if l < self.n_modes() {
                    let w = &wind[l * 2 * nn..(l + 1) * 2 * nn];
                    if is_zero(w) {
                        None
                    } else {
                        Some(self.space.scalar_convection(w))
                    }
                } else {
                    None
                };
                match (a, n) {
                    (Some(a), Some(n)) => Some(CsrMatrix::linear_combination(&[(1.0, a), (1.0, &n)])),
                    (Some(a), None) => Some(a.clone()),
                    (None, n) => n,
                }
            })
            .collect()
    }

    /// Dirichlet part of a state vector (zero on free dofs).
    fn dirichlet_part(&self, g: &[f64]) -> Vec<f64> {
        g.iter().zip(&self.fixed_state).map(|(&v, &f)| if f { v } else { 0.0 }).collect()
    }

    /// Packs velocity/pressure right-hand sides into the column-major layout,
    /// zeroing Dirichlet rows.
    fn pack(&self, ru: &[f64], rp: &[f64]) -> Vec<f64> {
        let nu = 2 * self.n_nodes();
        let np = self.n_pressure();
        let nx = nu + np;
        let mut out = vec![0.0; self.n_modes() * nx];
        for j in 0..self.n_modes() {
            for i in 0..nu {
                if !self.fixed_state[j * nu + i] {
                    out[j * nx + i] = ru[j * nu + i];
                }
            }
            out[j * nx + nu..(j + 1) * nx].copy_from_slice(&rp[j * np..(j + 1) * np]);
        }
        out
    }

    fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nu = 2 * self.n_nodes();
        let np = self.n_pressure();
        let nx = nu + np;
        let mut u = Vec::with_capacity(self.n_modes() * nu);
        let mut p = Vec::with_capacity(self.n_modes() * np);
        for j in 0..self.n_modes() {
            u.extend_from_slice(&x[j * nx..j * nx + nu]);
            p.extend_from_slice(&x[j * nx + nu..(j + 1) * nx]);
        }
        (u, p)
    }

    /// Pressure right-hand side `−B g_j` for every column.
    fn pressure_rhs(&self, gd: &[f64]) -> Vec<f64> {
        let nu = 2 * self.n_nodes();
        let np = self.n_pressure();
        let mut rp = vec![0.0; self.n_modes() * np];
        for j in 0..self.n_modes() {
            self.divergence.matvec_add(-1.0, &gd[j * nu..(j + 1) * nu], &mut rp[j * np..(j + 1) * np]);
        }
        rp
    }

    fn mass_apply(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        let nn = self.n_nodes();
        for (xc, yc) in x.chunks(nn).zip(y.chunks_mut(nn)) {
            self.mass.matvec_add(alpha, xc, yc);
        }
    }

    /// Direct LU of `[F_vec Bᵀ; B 0]` with Dirichlet rows and columns eliminated.
    fn monolithic_lu(&self, scalar: &CsrMatrix) -> Result<SparseLu> {
        let v = scalar.block_diagonal(2);
        let m = CsrMatrix::from_blocks(&[vec![Some(&v), Some(&self.divergence_ct)], vec![Some(&self.divergence_c), None]]);
        SparseLu::factor(&m)
    }

    fn solve_columns(&self, lu: &SparseLu, rhs: &[f64]) -> Vec<f64> {
        let nx = lu.dim();
        let mut x = vec![0.0; rhs.len()];
        for (r, s) in rhs.chunks(nx).zip(x.chunks_mut(nx)) {
            if !is_zero(r) {
                lu.solve_into(r, s);
            }
        }
        x
    }

    /// Step blocks `2M + kG_0` and `kG_ℓ` with Dirichlet rows and columns
    /// eliminated.
    fn constrain_blocks(&self, k: f64, blocks: &[Option<CsrMatrix>]) -> Vec<Option<CsrMatrix>> {
        let fixed = &self.fixed_nodes;
        let mut f0 = match &blocks[0] {
            Some(g) => CsrMatrix::linear_combination(&[(2.0, &self.mass), (k, g)]),
            None => CsrMatrix::linear_combination(&[(2.0, &self.mass)]),
        };
        f0.constrain_symmetric(fixed);
        let mut out = Vec::with_capacity(blocks.len());
        out.push(Some(f0));
        for b in &blocks[1..] {
            out.push(b.as_ref().map(|g| {
                let mut f = g.clone();
                f.scale(k);
                f.zero_constrained(fixed);
                f
            }));
        }
        out
    }

    /// Solves the step system; `rhs` is packed with Dirichlet rows zeroed.
    fn solve_step(&self, k: f64, blocks: &[Option<CsrMatrix>], mean_wind: &[f64], rhs: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        let constrained = self.constrain_blocks(k, blocks);
        if self.settings.direct {
            let lu = self.monolithic_lu(constrained[0].as_ref().unwrap())?;
            let x = self.solve_columns(&lu, rhs);
            let report = SolveReport { iterations: 0, relative_residual: 0.0, history: vec![1.0], converged: true, breakdown: false };
            return Ok((x, report));
        }
        let op = SgOseenOperator::with_transpose(self.tensor.clone(), constrained, self.divergence_c.clone(), self.divergence_ct.clone());
        let mut pc = self.step_preconditioner(&op, k, mean_wind)?;
        let (x, report) = fgmres(&op, &mut pc, rhs, &self.settings.gmres);
        if !report.converged {
            return Err(Error::NoConvergence { iterations: report.iterations, residual: report.relative_residual });
        }
        Ok((x, report))
    }

    /// The constrained step operator for per-mode winds, as used by the stepper.
    pub fn step_operator(&self, k: f64, wind: &[f64]) -> SgOseenOperator {
        let blocks = self.constrain_blocks(k, &self.operator_blocks(wind));
        SgOseenOperator::with_transpose(self.tensor.clone(), blocks, self.divergence_c.clone(), self.divergence_ct.clone())
    }

    /// Mean-based preconditioner for the operator returned by [`Self::step_operator`].
    pub fn step_preconditioner<'a>(&'a self, op: &SgOseenOperator, k: f64, mean_wind: &[f64]) -> Result<MeanBasedPcd<'a>> {
        let factors = self.pcd.as_ref().ok_or_else(|| Error::config("linear_solver.direct", "no preconditioner in direct mode"))?;
        let f0 = op.blocks[0].as_ref().expect("the mean block is never zero");
        let mean = match factors.settings.mode {
            PcdMode::ExactLu => MeanBlockSolver::Pcd { velocity: InnerSolver::build(InnerSolverKind::Lu, f0)?, fp: factors.pressure_operator(&self.space, k, mean_wind) },
            PcdMode::Iterated => MeanBlockSolver::Pcd { velocity: InnerSolver::build(factors.settings.inner, f0)?, fp: factors.pressure_operator(&self.space, k, mean_wind) },
            PcdMode::MeanSaddleLu => MeanBlockSolver::Saddle(self.monolithic_lu(f0)?),
        };
        Ok(MeanBasedPcd { factors, mean, divergence_t: &self.divergence_ct, n_nodes: self.n_nodes(), n_pressure: self.n_pressure(), n_modes: self.n_modes() })
    }
}

impl FlowSystem for SgSystem {
    fn velocity_len(&self) -> usize {
        self.n_modes() * 2 * self.n_nodes()
    }

    fn pressure_len(&self) -> usize {
        self.n_modes() * self.n_pressure()
    }

    fn fixed(&self) -> &[bool] {
        &self.fixed_state
    }

    fn boundary_values(&self, t: f64) -> Vec<f64> {
        let mut v = self.boundary.values(t);
        v.resize(self.velocity_len(), 0.0);
        v
    }

    fn initial_acceleration(&mut self, u0: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nn = self.n_nodes();
        let nu = 2 * nn;
        let gd = self.dirichlet_part(g);
        let blocks = self.operator_blocks(u0);
        let mut ru = vec![0.0; self.velocity_len()];
        apply_velocity_blocks(&self.tensor, &blocks, nn, nu, -1.0, u0, &mut ru);
        self.mass_apply(-1.0, &gd, &mut ru);
        let rp = self.pressure_rhs(&gd);
        let rhs = self.pack(&ru, &rp);
        if self.startup.is_none() {
            let mut m = self.mass.clone();
            m.constrain_symmetric(&self.fixed_nodes);
            self.startup = Some(self.monolithic_lu(&m)?);
        }
        let x = self.solve_columns(self.startup.as_ref().unwrap(), &rhs);
        let (a0, p0) = self.unpack(&x);
        let a0 = a0.iter().zip(&gd).map(|(a, g)| a + g).collect();
        Ok((a0, p0))
    }

    fn solve_oseen(&mut self, k: f64, wind: &[f64], u: &[f64], a: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>, SolveReport)> {
        let nn = self.n_nodes();
        let nu = 2 * nn;
        let gd = self.dirichlet_part(g);
        let blocks = self.operator_blocks(wind);
        // velocity rhs: M (a − 2 g) − Σ (H_ℓ ⊗ G_ℓ)(u + k g)
        let z: Vec<f64> = u.iter().zip(&gd).map(|(u, g)| u + k * g).collect();
        let mut ru = vec![0.0; self.velocity_len()];
        apply_velocity_blocks(&self.tensor, &blocks, nn, nu, -1.0, &z, &mut ru);
        let am: Vec<f64> = a.iter().zip(&gd).map(|(a, g)| a - 2.0 * g).collect();
        self.mass_apply(1.0, &am, &mut ru);
        let rp = self.pressure_rhs(&gd);
        let rhs = self.pack(&ru, &rp);
        let (x, report) = self.solve_step(k, &blocks, &wind[..nu], &rhs)?;
        let (d0, p) = self.unpack(&x);
        let d = d0.iter().zip(&gd).map(|(d, g)| d + g).collect();
        self.reports.push(report.clone());
        Ok((d, p, report))
    }

    fn error_norm(&self, e: &[f64]) -> f64 {
        let nn = self.n_nodes();
        let mut me = vec![0.0; nn];
        let mut s = 0.0;
        for c in e.chunks(nn) {
            self.mass.matvec(c, &mut me);
            s += c.iter().zip(&me).map(|(a, b)| a * b).sum::<f64>();
        }
        (s.max(0.0) / self.area).sqrt()
    }

    fn mode_norms(&self, u: &[f64]) -> Vec<f64> {
        u.chunks(2 * self.n_nodes()).map(norm2).collect()
    }

    fn divergence_residual(&self, u: &[f64]) -> f64 {
        let nu = 2 * self.n_nodes();
        let mut r = vec![0.0; self.n_pressure()];
        let mut worst: f64 = 0.0;
        for c in u.chunks(nu) {
            self.divergence.matvec(c, &mut r);
            worst = worst.max(norm2(&r));
        }
        if self.divergence_scale > 0.0 {
            worst / self.divergence_scale
        } else {
            worst
        }
    }
}

/// `10^⌊log10 x⌋`, exact for decimal powers.
pub fn decimal_floor(x: f64) -> f64 {
    let e = (x.log10() + 1e-12).floor() as i32;
    format!("1e{e}").parse().expect("valid float literal")
}

/// Derives a fixed step schedule from a deterministic run: each accepted
/// interval of length `L` is covered with steps `10^⌊log10(L / n_ξ)⌋`, and
/// intervals containing a barrier are split there.
pub fn build_sg_schedule(history: &[StepRecord], n_xi: usize, barriers: &[f64]) -> Result<StepSchedule> {
    let times: Vec<f64> = history.iter().filter(|r| r.accepted).map(|r| r.t).collect();
    if times.len() < 2 {
        return Err(Error::config("history", "a deterministic step history with at least one accepted step is required"));
    }
    let mut segments = Vec::new();
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        if !(len > 0.0) {
            continue;
        }
        let step = decimal_floor(len / n_xi.max(1) as f64);
        let mut start = a;
        for &bar in barriers.iter().filter(|&&t| t > a && t < b) {
            segments.push((start, bar, step));
            start = bar;
        }
        segments.push((start, b, step));
    }
    Ok(StepSchedule { segments })
}
