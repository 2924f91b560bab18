use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgns_core::boundary::BoundaryData;
use sgns_core::fem::FemSpace;
use sgns_core::field::{calibrate, kl_expand, lognormal_coeffs};
use sgns_core::gpc::{triple_products, GpcBasis, TripleProductTensor};
use sgns_core::krylov::{fgmres, LinearOperator, Preconditioner};
use sgns_core::mesh::{generate_obstacle_mesh, DEFAULT_OBSTACLE};
use sgns_core::pcd::PcdMode;
use sgns_core::sg::{build_sg_schedule, LinearSolverSettings, SgOseenOperator, SgSystem};
use sgns_core::sparse::CsrMatrix;
use sgns_core::stepper::{run, FlowSystem, StepMode, StepperConfig};

fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if rng.gen::<f64>() < density {
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    CsrMatrix::from_triplets(rows, cols, &t)
}

/// `Σ_ℓ F̃_ℓ V H_ℓ` with dense matrices, `F̃_0` carrying the divergence blocks.
fn dense_oracle(tensor: &TripleProductTensor, blocks: &[Option<CsrMatrix>], b: &CsrMatrix, v: &DMatrix<f64>) -> DMatrix<f64> {
    let nn = b.ncols() / 2;
    let np = b.nrows();
    let nx = 2 * nn + np;
    let mut y = DMatrix::zeros(nx, tensor.n_xi);
    for (l, block) in blocks.iter().enumerate() {
        let mut f = DMatrix::zeros(nx, nx);
        if let Some(g) = block {
            for i in 0..nn {
                for (j, val) in g.row(i) {
                    f[(i, j)] = val;
                    f[(nn + i, nn + j)] = val;
                }
            }
        }
        if l == 0 {
            for i in 0..np {
                for (j, val) in b.row(i) {
                    f[(2 * nn + i, j)] = val;
                    f[(j, 2 * nn + i)] = val;
                }
            }
        }
        let h = DMatrix::from_fn(tensor.n_xi, tensor.n_xi, |j, k| tensor.get(l, j, k));
        y += f * v * h;
    }
    y
}

#[test]
fn matvec_matches_kronecker_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for instance in 0..20 {
        let (m, p) = (1 + instance % 3, 1 + instance % 2);
        let basis = GpcBasis::new(m, p);
        let large = GpcBasis::new(m, 2 * p);
        let tensor = Arc::new(triple_products(&large, &basis).unwrap());
        let nn = rng.gen_range(3..8);
        let np = rng.gen_range(1..4);
        let blocks: Vec<Option<CsrMatrix>> = (0..tensor.n_hat())
            .map(|l| if l > 0 && rng.gen::<f64>() < 0.3 { None } else { Some(random_sparse(&mut rng, nn, nn, 0.5)) })
            .collect();
        let b = random_sparse(&mut rng, np, 2 * nn, 0.5);
        let op = SgOseenOperator::new(tensor.clone(), blocks.clone(), b.clone());
        let nx = op.column_len();
        let v = DMatrix::from_fn(nx, tensor.n_xi, |_, _| rng.gen_range(-1.0..1.0));
        let mut y = vec![0.0; op.dim()];
        op.apply(v.as_slice(), &mut y);
        let expect = dense_oracle(&tensor, &blocks, &b, &v);
        let scale = expect.amax().max(1.0);
        for (a, e) in y.iter().zip(expect.as_slice()) {
            assert!((a - e).abs() <= 1e-12 * scale, "instance {instance}: {a} vs {e}");
        }
    }
}

fn desk_space() -> Arc<FemSpace> {
    Arc::new(FemSpace::new(generate_obstacle_mesh(8.0, 1.0, Some(DEFAULT_OBSTACLE), 1).unwrap()))
}

fn short_config(t_end: f64) -> StepperConfig {
    StepperConfig { final_time: t_end, barriers: vec![0.0, 0.05, t_end], ..Default::default() }
}

#[test]
fn direct_and_iterative_deterministic_runs_agree() {
    let space = desk_space();
    let nu = vec![0.02; space.n_nodes()];
    let bc = BoundaryData::poiseuille(&space, 5.0);
    let direct = LinearSolverSettings { direct: true, ..Default::default() };
    let mut a = SgSystem::deterministic(space.clone(), bc.clone(), nu.clone(), direct).unwrap();
    let out_a = run(&mut a, &short_config(0.1), StepMode::Adaptive, &vec![0.0; space.dofs.n_u]).unwrap();
    let schedule = build_sg_schedule(&out_a.history, 1, &[0.05]).unwrap();
    // both on the same fixed schedule so the comparison is solver-only
    let mut a = SgSystem::deterministic(space.clone(), bc.clone(), nu.clone(), direct).unwrap();
    let out_a = run(&mut a, &short_config(0.1), StepMode::Schedule(&schedule), &vec![0.0; space.dofs.n_u]).unwrap();
    let mut b = SgSystem::deterministic(space.clone(), bc, nu, LinearSolverSettings::default()).unwrap();
    let out_b = run(&mut b, &short_config(0.1), StepMode::Schedule(&schedule), &vec![0.0; space.dofs.n_u]).unwrap();
    let ua = &out_a.snapshot_at(0.1).unwrap().u;
    let ub = &out_b.snapshot_at(0.1).unwrap().u;
    let diff = ua.iter().zip(ub).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "max difference {diff}");
}

#[test]
fn boundary_data_is_imposed_and_flow_is_divergence_free() {
    let space = desk_space();
    let bc = BoundaryData::poiseuille(&space, 5.0);
    let mut sys = SgSystem::deterministic(space.clone(), bc.clone(), vec![0.02; space.n_nodes()], LinearSolverSettings::default()).unwrap();
    let out = run(&mut sys, &short_config(0.1), StepMode::Adaptive, &vec![0.0; space.dofs.n_u]).unwrap();
    let snap = out.snapshot_at(0.1).unwrap();
    let g = bc.values(0.1);
    for i in 0..space.dofs.n_u {
        if space.dofs.dirichlet[i] {
            assert!((snap.u[i] - g[i]).abs() < 1e-12, "dof {i}");
        }
    }
    assert!(out.accepted().all(|r| r.divergence < 1e-7));
}

fn sg_viscosity(space: &FemSpace, cov: f64, m: usize, p: usize) -> (Vec<Vec<f64>>, Arc<TripleProductTensor>) {
    let kl = kl_expand(&space.mesh, 2.0, 0.5, 1.0, m).unwrap();
    let cal = calibrate(0.02, cov, &kl).unwrap();
    let large = GpcBasis::new(m, 2 * p);
    let visc = lognormal_coeffs(&kl.calibrated(&cal), &large).unwrap();
    let tensor = Arc::new(triple_products(&large, &GpcBasis::new(m, p)).unwrap());
    (visc.coeffs, tensor)
}

#[test]
fn zero_variance_galerkin_run_reduces_to_deterministic() {
    let space = desk_space();
    let bc = BoundaryData::poiseuille(&space, 5.0);
    let (visc, tensor) = sg_viscosity(&space, 0.0, 2, 2);
    let mut det = SgSystem::deterministic(space.clone(), bc.clone(), visc[0].clone(), LinearSolverSettings::default()).unwrap();
    let config = short_config(0.1);
    let det_out = run(&mut det, &config, StepMode::Adaptive, &vec![0.0; space.dofs.n_u]).unwrap();
    let schedule = build_sg_schedule(&det_out.history, tensor.n_xi, &config.barriers).unwrap();
    let mut det = SgSystem::deterministic(space.clone(), bc.clone(), visc[0].clone(), LinearSolverSettings::default()).unwrap();
    let det_out = run(&mut det, &config, StepMode::Schedule(&schedule), &vec![0.0; space.dofs.n_u]).unwrap();
    let mut sg = SgSystem::new(space.clone(), bc, &visc, tensor.clone(), LinearSolverSettings::default()).unwrap();
    let n = sg.velocity_len();
    let sg_out = run(&mut sg, &config, StepMode::Schedule(&schedule), &vec![0.0; n]).unwrap();
    let nu = space.dofs.n_u;
    let u_det = &det_out.snapshot_at(0.1).unwrap().u;
    let u_sg = &sg_out.snapshot_at(0.1).unwrap().u;
    let mean_diff = u_det.iter().zip(&u_sg[..nu]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let higher = u_sg[nu..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(mean_diff < 1e-8, "mean difference {mean_diff}");
    assert!(higher < 1e-8, "higher modes {higher}");
}

#[test]
fn mean_saddle_preconditioner_is_exact_for_single_mode() {
    let space = desk_space();
    let bc = BoundaryData::poiseuille(&space, 5.0);
    let mut settings = LinearSolverSettings::default();
    settings.pcd.mode = PcdMode::MeanSaddleLu;
    let mut sys = SgSystem::deterministic(space.clone(), bc, vec![0.02; space.n_nodes()], settings).unwrap();
    let out = run(&mut sys, &StepperConfig { final_time: 0.05, barriers: vec![0.0, 0.05], ..Default::default() }, StepMode::Adaptive, &vec![0.0; space.dofs.n_u]).unwrap();
    assert!(out.accepted().skip(1).all(|r| r.gmres_iters <= 1));
}

#[test]
fn pcd_iterations_stay_moderate() {
    let space = desk_space();
    let bc = BoundaryData::poiseuille(&space, 5.0);
    let (visc, tensor) = sg_viscosity(&space, 0.1, 2, 2);
    let mut sg = SgSystem::new(space.clone(), bc, &visc, tensor, LinearSolverSettings::default()).unwrap();
    let n = sg.velocity_len();
    let config = StepperConfig { final_time: 0.05, barriers: vec![0.0, 0.05], ..Default::default() };
    let out = run(&mut sg, &config, StepMode::Adaptive, &vec![0.0; n]).unwrap();
    assert!(out.accepted().skip(1).all(|r| r.gmres_iters > 0 && r.gmres_iters <= 20));
}

fn step_problem(cov: f64) -> (SgSystem, Vec<f64>) {
    let space = desk_space();
    let bc = BoundaryData::poiseuille(&space, 5.0);
    let (visc, tensor) = sg_viscosity(&space, cov, 2, 2);
    let sg = SgSystem::new(space.clone(), bc.clone(), &visc, tensor, LinearSolverSettings::default()).unwrap();
    // a plausible wind: the steady inflow profile in the mean, small higher modes
    let nu = space.dofs.n_u;
    let mut wind = vec![0.0; sg.velocity_len()];
    wind[..nu].copy_from_slice(&bc.steady);
    for (i, w) in wind[nu..].iter_mut().enumerate() {
        *w = 1e-2 * ((i % 17) as f64 / 17.0 - 0.5);
    }
    (sg, wind)
}

#[test]
fn preconditioner_with_zero_pressure_residual() {
    let (sg, wind) = step_problem(0.1);
    let k = 0.01;
    let op = sg.step_operator(k, &wind);
    let mut pc = sg.step_preconditioner(&op, k, &wind[..sg.space.dofs.n_u]).unwrap();
    let nx = op.column_len();
    let nu = 2 * op.n_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut r = vec![0.0; op.dim()];
    for j in 0..op.n_modes() {
        for i in 0..nu {
            if !sg.fixed()[j * nu + i] {
                r[j * nx + i] = rng.gen_range(-1.0..1.0);
            }
        }
    }
    let mut z = vec![0.0; r.len()];
    pc.apply(&r, &mut z);
    // pressure part vanishes and the velocity part solves the mean block
    let f0 = op.blocks[0].as_ref().unwrap();
    for j in 0..op.n_modes() {
        assert!(z[j * nx + nu..(j + 1) * nx].iter().all(|&v| v == 0.0));
        let zu = &z[j * nx..j * nx + nu];
        let mut back = vec![0.0; nu];
        f0.matvec(&zu[..nu / 2], &mut back[..nu / 2]);
        f0.matvec(&zu[nu / 2..], &mut back[nu / 2..]);
        for (b, rr) in back.iter().zip(&r[j * nx..j * nx + nu]) {
            assert!((b - rr).abs() < 1e-10);
        }
    }
}

#[test]
fn preconditioned_operator_spectrum_is_bounded_away_from_zero() {
    // GMRES residual history on a random right-hand side decreases steadily,
    // which rules out eigenvalues clustering at zero.
    let (sg, wind) = step_problem(0.1);
    let k = 0.01;
    let op = sg.step_operator(k, &wind);
    let mut pc = sg.step_preconditioner(&op, k, &wind[..sg.space.dofs.n_u]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let nx = op.column_len();
    let nu = 2 * op.n_nodes;
    let rhs: Vec<f64> = (0..op.dim())
        .map(|i| {
            let (j, r) = (i / nx, i % nx);
            if r < nu && sg.fixed()[j * nu + r] {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    let (x, rep) = fgmres(&op, &mut pc, &rhs, &Default::default());
    assert!(rep.converged && rep.iterations <= 25, "{rep:?}");
    let mut ax = vec![0.0; op.dim()];
    op.apply(&x, &mut ax);
    let res: f64 = ax.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(res / nb < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn preconditioner_acts_columnwise(col in 0usize..6, seed in 0u64..1000) {
        let (sg, wind) = step_problem(0.1);
        let k = 0.02;
        let op = sg.step_operator(k, &wind);
        let mut pc = sg.step_preconditioner(&op, k, &wind[..sg.space.dofs.n_u]).unwrap();
        let nx = op.column_len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut z = vec![0.0; r.len()];
        pc.apply(&r, &mut z);
        let mut r2 = r.clone();
        for v in &mut r2[col * nx..(col + 1) * nx] {
            *v += rng.gen_range(-1.0..1.0);
        }
        let mut z2 = vec![0.0; r.len()];
        pc.apply(&r2, &mut z2);
        for j in 0..op.n_modes() {
            if j != col {
                prop_assert_eq!(&z[j * nx..(j + 1) * nx], &z2[j * nx..(j + 1) * nx]);
            }
        }
    }
}
