//! Problem setup and run orchestration shared by the command-line tool and
//! the tests.

use std::sync::Arc;

use crate::boundary::BoundaryData;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::field::{calibrate, kl_expand, lognormal_coeffs, sample_viscosity, Calibration, LognormalViscosity};
use crate::gpc::{triple_products, GpcBasis, TripleProductTensor};
use crate::mesh::generate_obstacle_mesh;
use crate::sampling::{ensemble_moments, project_pseudospectral, run_ensemble, EnsembleResult, SampleSet};
use crate::sg::{build_sg_schedule, SgSystem};
use crate::stepper::{run, RunOutput, StepMode, StepSchedule};

/// Discretized flow problem with its random viscosity.
pub struct Problem {
    pub config: RunConfig,
    pub space: Arc<FemSpace>,
    pub boundary: BoundaryData,
    /// Solution basis (degree `p_ξ`).
    pub basis: GpcBasis,
    /// Viscosity expansion on the degree-`2p_ξ` basis.
    pub viscosity: LognormalViscosity,
    pub calibration: Calibration,
    pub tensor: Arc<TripleProductTensor>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Problem {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let mc = &config.mesh;
        let mesh = generate_obstacle_mesh(mc.length, mc.half_height, mc.obstacle_rect(), mc.refinement)?;
        for (i, p) in config.probes.iter().enumerate() {
            if mesh.locate(p[0], p[1]).is_none() {
                return Err(Error::config(format!("probes[{i}]"), format!("point ({}, {}) is outside the fluid domain", p[0], p[1])));
            }
        }
        let space = Arc::new(FemSpace::new(mesh));
        let boundary = BoundaryData::poiseuille(&space, config.ramp_rate);
        let (lx, ly) = config.correlation_lengths();
        let kl = kl_expand(&space.mesh, lx, ly, 1.0, config.m_xi)?;
        let calibration = calibrate(config.nu_mean, config.cov, &kl)?;
        let basis = GpcBasis::new(config.m_xi, config.p_xi);
        let large = GpcBasis::new(config.m_xi, 2 * config.p_xi);
        let viscosity = lognormal_coeffs(&kl.calibrated(&calibration), &large)?;
        let tensor = Arc::new(triple_products(&large, &basis)?);
        Ok(Problem { config, space, boundary, basis, viscosity, calibration, tensor })
    }

    fn zero_velocity(&self, modes: usize) -> Vec<f64> {
        vec![0.0; modes * self.space.dofs.n_u]
    }

    fn mode(schedule: Option<&StepSchedule>) -> StepMode<'_> {
        schedule.map_or(StepMode::Adaptive, StepMode::Schedule)
    }

    /// Deterministic run with the mean viscosity field.
    pub fn run_det(&self, schedule: Option<&StepSchedule>) -> Result<RunOutput> {
        self.run_with_viscosity(self.viscosity.mean().to_vec(), schedule)
    }

    /// Deterministic run with a given nodal viscosity.
    pub fn run_with_viscosity(&self, nu: Vec<f64>, schedule: Option<&StepSchedule>) -> Result<RunOutput> {
        let mut sys = SgSystem::deterministic(self.space.clone(), self.boundary.clone(), nu, self.config.linear_solver)?;
        run(&mut sys, &self.config.stepper, Self::mode(schedule), &self.zero_velocity(1))
    }

    /// Galerkin system on the configured bases.
    pub fn sg_system(&self) -> Result<SgSystem> {
        SgSystem::new(self.space.clone(), self.boundary.clone(), &self.viscosity.coeffs, self.tensor.clone(), self.config.linear_solver)
    }

    /// Fixed schedule derived from a deterministic history.
    pub fn sg_schedule(&self, det: &RunOutput) -> Result<StepSchedule> {
        build_sg_schedule(&det.history, self.basis.len(), &self.config.stepper.landing_times())
    }

    pub fn run_sg(&self, schedule: &StepSchedule) -> Result<RunOutput> {
        let mut sys = self.sg_system()?;
        run(&mut sys, &self.config.stepper, StepMode::Schedule(schedule), &self.zero_velocity(self.basis.len()))
    }

    /// Viscosity realization at `ξ`; nonpositive values are an error.
    pub fn viscosity_sample(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let (nu, bad) = sample_viscosity(&self.viscosity, xi);
        if bad > 0 {
            return Err(Error::config("CoV", format!("viscosity realization has {bad} nonpositive nodal values at ξ = {xi:?}")));
        }
        Ok(nu)
    }

    /// Independent deterministic runs at every sample point.
    pub fn run_samples(&self, samples: &SampleSet, schedule: Option<&StepSchedule>, threads: usize) -> EnsembleResult<RunOutput> {
        run_ensemble(samples, threads, |_, xi| self.run_with_viscosity(self.viscosity_sample(xi)?, schedule))
    }
}

/// Mean and variance of velocity and pressure at one barrier, with the chaos
/// coefficients when the method provides them.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierState {
    pub t: f64,
    pub mean_u: Vec<f64>,
    pub var_u: Vec<f64>,
    pub mean_p: Vec<f64>,
    /// Velocity coefficients, mode-major (empty for Monte Carlo).
    pub coeffs_u: Vec<f64>,
}

fn variance_of_modes(stacked: &[f64], n: usize) -> Vec<f64> {
    let mut var = vec![0.0; n];
    for c in stacked.chunks(n).skip(1) {
        var.iter_mut().zip(c).for_each(|(v, x)| *v += x * x);
    }
    var
}

/// Barrier states of a Galerkin run.
pub fn galerkin_states(out: &RunOutput, n_u: usize, n_p: usize) -> Vec<BarrierState> {
    out.snapshots
        .iter()
        .map(|s| BarrierState { t: s.t, mean_u: s.u[..n_u].to_vec(), var_u: variance_of_modes(&s.u, n_u), mean_p: s.p[..n_p].to_vec(), coeffs_u: s.u.clone() })
        .collect()
}

fn snapshots_at<'a>(runs: &[&'a RunOutput], t: f64) -> Result<(Vec<&'a [f64]>, Vec<&'a [f64]>)> {
    let mut u = Vec::with_capacity(runs.len());
    let mut p = Vec::with_capacity(runs.len());
    for (i, r) in runs.iter().enumerate() {
        let s = r.snapshot_at(t).ok_or_else(|| Error::Stepping { time: t, reason: format!("sample {i} has no state at this barrier") })?;
        u.push(s.u.as_slice());
        p.push(s.p.as_slice());
    }
    Ok((u, p))
}

/// Barrier states of a collocation ensemble by discrete projection onto `basis`.
pub fn collocation_states(samples: &SampleSet, runs: &[&RunOutput], basis: &GpcBasis, times: &[f64]) -> Result<Vec<BarrierState>> {
    times
        .iter()
        .map(|&t| {
            let (u, p) = snapshots_at(runs, t)?;
            let cu = project_pseudospectral(samples, &u, basis)?;
            let cp = project_pseudospectral(samples, &p, basis)?;
            let n = cu[0].len();
            let coeffs_u: Vec<f64> = cu.concat();
            Ok(BarrierState { t, mean_u: cu[0].clone(), var_u: variance_of_modes(&coeffs_u, n), mean_p: cp[0].clone(), coeffs_u })
        })
        .collect()
}

/// Barrier states of a Monte Carlo ensemble (sample mean and variance).
pub fn sample_states(runs: &[&RunOutput], times: &[f64]) -> Result<Vec<BarrierState>> {
    times
        .iter()
        .map(|&t| {
            let (u, p) = snapshots_at(runs, t)?;
            let mu = ensemble_moments(&u)?;
            let mp = ensemble_moments(&p)?;
            Ok(BarrierState { t, mean_u: mu.mean, var_u: mu.variance, mean_p: mp.mean, coeffs_u: Vec::new() })
        })
        .collect()
}

/// Velocity at a point for one chaos mode of a stacked state.
pub fn probe_velocity(space: &FemSpace, u: &[f64], mode: usize, x: f64, y: f64) -> Option<[f64; 2]> {
    let nu = space.dofs.n_u;
    space.velocity_at(&u[mode * nu..(mode + 1) * nu], x, y)
}
