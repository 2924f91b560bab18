use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde_json::json;

use sgns_core::config::{echo_config, parse_config, RunConfig};
use sgns_core::driver::{collocation_states, galerkin_states, probe_velocity, sample_states, BarrierState, Problem};
use sgns_core::export::{flow_fields, pressure_at_nodes, write_field_csv, write_history, write_table, write_vtk, NodalField};
use sgns_core::post::{coefficient_norm_series, compare_report, gpc_probe_moments, probe_pdf, probe_samples, sample_probe_moments, Method, PdfEstimate, ProbeData, ProbeMoments};
use sgns_core::sampling::{build_sparse_grid, draw_mc, EnsembleResult, SampleSet};
use sgns_core::stepper::{RunOutput, StepRecord};

use crate::plots;
use crate::{ReportArgs, RunArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Det,
    Sg,
    Mc,
    Sc,
}

impl Mode {
    fn method(self) -> Method {
        match self {
            Mode::Det => Method::Det,
            Mode::Sg => Method::Sg,
            Mode::Mc => Method::Mc,
            Mode::Sc => Method::Sc,
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut config = parse_config(&text)?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(t) = args.threads {
        config.threads = t;
    }
    if let Some(o) = &args.out {
        config.output_dir = o.to_string_lossy().into_owned();
    }
    config.validate()?;
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn time_tag(t: f64) -> String {
    format!("t{t}")
}

/// Mean, median and maximum Krylov iterations over accepted steps after start-up.
fn iteration_stats(histories: &[&[StepRecord]]) -> serde_json::Value {
    let mut its: Vec<usize> = histories.iter().flat_map(|h| h.iter().filter(|r| r.accepted && r.step > 0).map(|r| r.gmres_iters)).collect();
    if its.is_empty() {
        return json!(null);
    }
    its.sort_unstable();
    let mean = its.iter().sum::<usize>() as f64 / its.len() as f64;
    json!({ "mean": mean, "median": its[its.len() / 2], "max": its[its.len() - 1], "solves": its.len() })
}

fn step_counts(h: &[StepRecord]) -> (usize, usize) {
    let acc = h.iter().filter(|r| r.accepted).count();
    (acc, h.len() - acc)
}

fn final_time(h: &[StepRecord]) -> f64 {
    h.iter().filter(|r| r.accepted).map(|r| r.t).last().unwrap_or(0.0)
}

pub fn run(mode: Mode, args: &RunArgs) -> Result<()> {
    let config = load_config(args)?;
    let dir = PathBuf::from(&config.output_dir).join(mode.method().name());
    fs::create_dir_all(dir.join("snapshots")).with_context(|| format!("creating {}", dir.display()))?;
    write_text(&dir.join("config.json"), &echo_config(&config))?;
    let clock = Instant::now();
    let problem = Problem::new(config.clone())?;
    log::info!(
        "{} run: {} velocity dofs, {} pressure dofs, {} chaos modes",
        mode.method().name(),
        problem.space.dofs.n_u,
        problem.space.dofs.n_p,
        problem.basis.len()
    );
    let mut summary = json!({ "mode": mode.method().name(), "barriers": config.stepper.landing_times() });
    match mode {
        Mode::Det => {
            let out = problem.run_det(None)?;
            write_history(create(&dir.join("history.csv"))?, &out.history)?;
            write_det_outputs(&problem, &out, &dir)?;
            describe_run(&mut summary, &out);
        }
        Mode::Sg => {
            let det = reference_run(&problem, &dir)?;
            let schedule = problem.sg_schedule(&det)?;
            write_text(&dir.join("schedule.json"), &serde_json::to_string_pretty(&schedule)?)?;
            let out = problem.run_sg(&schedule)?;
            write_history(create(&dir.join("history.csv"))?, &out.history)?;
            write_mode_norms(&dir, &out, problem.basis.len())?;
            let states = galerkin_states(&out, problem.space.dofs.n_u, problem.space.dofs.n_p);
            write_states(&problem, &states, &dir, Mode::Sg, None)?;
            describe_run(&mut summary, &out);
        }
        Mode::Sc => {
            let det = reference_run(&problem, &dir)?;
            let schedule = problem.sg_schedule(&det)?;
            write_text(&dir.join("schedule.json"), &serde_json::to_string_pretty(&schedule)?)?;
            let grid = build_sparse_grid(config.m_xi, config.sparse_grid_level())?;
            log::info!("sparse grid level {}: {} points", config.sparse_grid_level(), grid.len());
            let ens = problem.run_samples(&grid, Some(&schedule), config.threads);
            write_samples(&dir, &grid, &ens)?;
            describe_ensemble(&mut summary, &ens);
            let runs = ens.all_ok().context("every collocation point must succeed")?;
            let states = collocation_states(&grid, &runs, &problem.basis, &config.stepper.landing_times())?;
            write_states(&problem, &states, &dir, Mode::Sc, None)?;
        }
        Mode::Mc => {
            let samples = draw_mc(config.n_samples, config.m_xi, config.seed)?;
            let ens = problem.run_samples(&samples, None, config.threads);
            write_samples(&dir, &samples, &ens)?;
            describe_ensemble(&mut summary, &ens);
            let runs: Vec<&RunOutput> = ens.runs.iter().filter_map(|r| r.as_ref().ok()).collect();
            if runs.len() < 2 {
                bail!("{} of {} Monte Carlo samples succeeded; at least two are needed", runs.len(), ens.runs.len());
            }
            let states = sample_states(&runs, &config.stepper.landing_times())?;
            write_states(&problem, &states, &dir, Mode::Mc, Some(&runs))?;
        }
    }
    summary["wall_clock_seconds"] = json!(clock.elapsed().as_secs_f64());
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    write_text(&dir.join("steps.gp"), &plots::steps())?;
    log::info!("{} run finished in {:.1} s; results in {}", mode.method().name(), clock.elapsed().as_secs_f64(), dir.display());
    Ok(())
}

/// Adaptive deterministic run whose accepted steps define the fixed schedule.
fn reference_run(problem: &Problem, dir: &Path) -> Result<RunOutput> {
    let det = problem.run_det(None)?;
    write_history(create(&dir.join("det_history.csv"))?, &det.history)?;
    Ok(det)
}

fn describe_run(summary: &mut serde_json::Value, out: &RunOutput) {
    let (acc, rej) = step_counts(&out.history);
    summary["final_time"] = json!(final_time(&out.history));
    summary["accepted_steps"] = json!(acc);
    summary["rejected_steps"] = json!(rej);
    summary["gmres_iterations"] = iteration_stats(&[&out.history]);
}

fn describe_ensemble(summary: &mut serde_json::Value, ens: &EnsembleResult<RunOutput>) {
    let ok: Vec<&RunOutput> = ens.runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let times: Vec<f64> = ok.iter().map(|o| final_time(&o.history)).collect();
    let histories: Vec<&[StepRecord]> = ok.iter().map(|o| o.history.as_slice()).collect();
    summary["samples"] = json!(ens.runs.len());
    summary["failed_samples"] = json!(ens.failures().iter().map(|(i, e)| json!({ "index": i, "error": e })).collect::<Vec<_>>());
    summary["final_time"] = json!({
        "min": times.iter().copied().fold(f64::INFINITY, f64::min),
        "max": times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    summary["accepted_steps"] = json!(ok.iter().map(|o| step_counts(&o.history).0).sum::<usize>());
    summary["rejected_steps"] = json!(ok.iter().map(|o| step_counts(&o.history).1).sum::<usize>());
    summary["gmres_iterations"] = iteration_stats(&histories);
}

fn write_det_outputs(problem: &Problem, out: &RunOutput, dir: &Path) -> Result<()> {
    let space = &problem.space;
    let probes = &problem.config.probes;
    let mut rows = Vec::new();
    for s in &out.snapshots {
        let fields = flow_fields(space, &s.u, &s.p);
        let tag = time_tag(s.t);
        write_vtk(create(&dir.join("snapshots").join(format!("{tag}.vtk")))?, &space.mesh, &format!("deterministic flow at t = {}", s.t), &fields)?;
        write_field_csv(create(&dir.join("snapshots").join(format!("{tag}.csv")))?, &space.mesh, &fields)?;
        for (i, p) in probes.iter().enumerate() {
            let v = probe_velocity(space, &s.u, 0, p[0], p[1]).context("probe outside the domain")?;
            rows.push(vec![s.t, i as f64, v[0], v[1]]);
        }
    }
    write_table(create(&dir.join("probes.csv"))?, &["t", "probe", "u_x", "u_y"], &rows)?;
    Ok(())
}

fn write_mode_norms(dir: &Path, out: &RunOutput, n_modes: usize) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((0..n_modes).map(|k| format!("mode{k}")));
    let rows: Vec<Vec<f64>> = coefficient_norm_series(out).into_iter().map(|(t, n)| std::iter::once(t).chain(n).collect()).collect();
    write_table(create(&dir.join("mode_norms.csv"))?, &header, &rows)?;
    write_text(&dir.join("mode_norms.gp"), &plots::mode_norms(n_modes))?;
    Ok(())
}

fn write_samples(dir: &Path, samples: &SampleSet, ens: &EnsembleResult<RunOutput>) -> Result<()> {
    let m = samples.points.first().map_or(0, |p| p.len());
    let mut header = vec!["index".to_string()];
    header.extend((1..=m).map(|d| format!("xi{d}")));
    header.extend(["weight", "ok", "accepted_steps", "final_t"].map(String::from));
    let rows: Vec<Vec<f64>> = samples
        .points
        .iter()
        .zip(&samples.weights)
        .zip(&ens.runs)
        .enumerate()
        .map(|(i, ((xi, w), r))| {
            let mut row = vec![i as f64];
            row.extend(xi);
            row.push(*w);
            match r {
                Ok(o) => row.extend([1.0, step_counts(&o.history).0 as f64, final_time(&o.history)]),
                Err(_) => row.extend([0.0, 0.0, f64::NAN]),
            }
            row
        })
        .collect();
    write_table(create(&dir.join("samples.csv"))?, &header, &rows)?;
    Ok(())
}

/// Mean and variance fields, chaos coefficients, probe moments and densities
/// at every barrier. `runs` holds the Monte Carlo samples.
fn write_states(problem: &Problem, states: &[BarrierState], dir: &Path, mode: Mode, runs: Option<&[&RunOutput]>) -> Result<()> {
    let space = &problem.space;
    let probes = &problem.config.probes;
    let n_u = space.dofs.n_u;
    let pdf_dir = dir.join("pdf");
    fs::create_dir_all(&pdf_dir)?;
    let mut moments: Vec<ProbeMoments> = Vec::new();
    let mut pdf_files = Vec::new();
    for s in states {
        let tag = time_tag(s.t);
        let fields = vec![
            NodalField::velocity("mean_velocity", &s.mean_u),
            NodalField::velocity("variance_velocity", &s.var_u),
            NodalField::scalar("mean_pressure", pressure_at_nodes(&space.mesh, &s.mean_p)),
        ];
        let title = format!("{} moments at t = {}", mode.method().name(), s.t);
        write_vtk(create(&dir.join("snapshots").join(format!("{tag}.vtk")))?, &space.mesh, &title, &fields)?;
        write_field_csv(create(&dir.join("snapshots").join(format!("{tag}.csv")))?, &space.mesh, &fields)?;

        let pm = match runs {
            None => {
                let coeffs: Vec<NodalField> = s.coeffs_u.chunks(n_u).enumerate().map(|(k, c)| NodalField::velocity(format!("mode{k}"), c)).collect();
                write_field_csv(create(&dir.join("snapshots").join(format!("coefficients_{tag}.csv")))?, &space.mesh, &coeffs)?;
                gpc_probe_moments(space, s.t, &s.coeffs_u, probes)?
            }
            Some(runs) => {
                let fields: Vec<&[f64]> = runs.iter().map(|r| r.snapshot_at(s.t).expect("states exist only where snapshots do").u.as_slice()).collect();
                sample_probe_moments(space, s.t, &fields, probes)?
            }
        };
        moments.push(pm);

        if s.t > 0.0 {
            let pdfs = probe_densities(problem, s, mode, runs)?;
            for (probe, c, est) in pdfs {
                let name = format!("{tag}_p{probe}_{}.csv", ["x", "y"][c]);
                let rows: Vec<Vec<f64>> = est.grid.iter().zip(&est.density).map(|(x, d)| vec![*x, *d]).collect();
                write_table(create(&pdf_dir.join(&name))?, &["value", "density"], &rows)?;
                pdf_files.push(name);
            }
        }
    }
    let mut rows = Vec::new();
    for m in &moments {
        for i in 0..probes.len() {
            for c in 0..2 {
                rows.push(vec![m.t, i as f64, c as f64, m.mean[i][c], m.variance[i][c], m.std_error(i, c).unwrap_or(0.0)]);
            }
        }
    }
    write_table(create(&dir.join("probe_moments.csv"))?, &["t", "probe", "component", "mean", "variance", "std_error"], &rows)?;
    write_text(&dir.join("probe_moments.json"), &serde_json::to_string_pretty(&moments)?)?;
    write_text(&dir.join("probe_moments.gp"), &plots::probe_moments(probes.len()))?;
    write_text(&dir.join("pdf.gp"), &plots::densities(&pdf_files))?;
    Ok(())
}

fn probe_densities(problem: &Problem, s: &BarrierState, mode: Mode, runs: Option<&[&RunOutput]>) -> Result<Vec<(usize, usize, PdfEstimate)>> {
    let space = &problem.space;
    let probes = &problem.config.probes;
    let mut out = Vec::new();
    match runs {
        None => {
            let n_modes = s.coeffs_u.len() / space.dofs.n_u;
            for (i, p) in probes.iter().enumerate() {
                let per_mode: Vec<[f64; 2]> = (0..n_modes).map(|k| probe_velocity(space, &s.coeffs_u, k, p[0], p[1]).expect("probes are checked")).collect();
                for c in 0..2 {
                    let coeffs: Vec<f64> = per_mode.iter().map(|v| v[c]).collect();
                    let data = ProbeData::Expansion { coeffs: &coeffs, basis: &problem.basis, seed: problem.config.seed };
                    out.push((i, c, probe_pdf(data, mode.method(), s.t)?));
                }
            }
        }
        Some(runs) => {
            let fields: Vec<&[f64]> = runs.iter().map(|r| r.snapshot_at(s.t).expect("states exist only where snapshots do").u.as_slice()).collect();
            for (i, comps) in probe_samples(space, &fields, probes)?.iter().enumerate() {
                for (c, values) in comps.iter().enumerate() {
                    out.push((i, c, probe_pdf(ProbeData::Samples(values), Method::Mc, s.t)?));
                }
            }
        }
    }
    for (i, c, est) in &out {
        let integral = est.integral();
        if (integral - 1.0).abs() > 0.01 {
            log::warn!("density at probe {i} component {c}, t = {}, integrates to {integral}", est.time);
        }
    }
    Ok(out)
}

fn read_moments(dir: &Path, method: Method) -> Result<Vec<ProbeMoments>> {
    let path = dir.join(method.name()).join("probe_moments.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}; run `run-{}` first", path.display(), method.name()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let sg = read_moments(&args.out, Method::Sg)?;
    let sc = read_moments(&args.out, Method::Sc)?;
    let mc = read_moments(&args.out, Method::Mc)?;
    let barriers: Vec<f64> = sg.iter().map(|m| m.t).filter(|&t| t > 0.0).collect();
    let rows = compare_report(&barriers, &sg, &sc, &mc)?;
    let dir = args.out.join("report");
    fs::create_dir_all(&dir)?;
    let header = [
        "t", "probe", "component", "sg_mean", "sc_mean", "mc_mean", "mc_std_error", "sg_variance", "sc_variance", "mc_variance", "sg_sc_mean_rel", "sg_sc_variance_rel",
        "sg_mc_mean_in_se",
    ];
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            vec![
                r.t,
                r.probe as f64,
                r.component as f64,
                r.sg_mean,
                r.sc_mean,
                r.mc_mean,
                r.mc_std_error,
                r.sg_variance,
                r.sc_variance,
                r.mc_variance,
                r.sg_sc_mean_rel,
                r.sg_sc_variance_rel,
                r.sg_mc_mean_in_se,
            ]
        })
        .collect();
    write_table(create(&dir.join("comparison.csv"))?, &header, &table)?;
    write_text(&dir.join("comparison.json"), &serde_json::to_string_pretty(&rows)?)?;
    write_text(&dir.join("comparison.gp"), &plots::comparison())?;
    let worst = |f: fn(&sgns_core::post::ComparisonRow) -> f64| rows.iter().map(f).fold(0.0f64, f64::max);
    println!("barriers compared: {barriers:?}");
    println!("max |SG-SC| mean (relative):     {:.3e}", worst(|r| r.sg_sc_mean_rel));
    println!("max |SG-SC| variance (relative): {:.3e}", worst(|r| r.sg_sc_variance_rel));
    println!("max |SG-MC| mean / MC std error: {:.3}", worst(|r| r.sg_mc_mean_in_se));
    Ok(())
}
