//! Adaptive trapezoid-rule / AB2 time integrator with time-step averaging.
//!
//! The integrator is written against [`FlowSystem`], which supplies the
//! linear solves; all state updates are elementwise, so the same loop drives
//! a single deterministic flow and a stacked set of chaos coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::SolveReport;

/// Semi-discrete flow problem advanced by [`run`].
pub trait FlowSystem {
    /// Length of the velocity (and acceleration) state vector.
    fn velocity_len(&self) -> usize;
    /// Length of the pressure state vector.
    fn pressure_len(&self) -> usize;
    /// Dirichlet flags over the velocity state.
    fn fixed(&self) -> &[bool];
    /// Dirichlet values at time `t` (only flagged entries are read).
    fn boundary_values(&self, t: f64) -> Vec<f64>;
    /// Initial acceleration and pressure from the mass saddle-point system;
    /// `g` carries the acceleration's Dirichlet data.
    fn initial_acceleration(&mut self, u0: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    /// Solves the Oseen problem for the update `d` and the new pressure.
    /// `g` carries the Dirichlet data of `d`.
    fn solve_oseen(&mut self, k: f64, wind: &[f64], u: &[f64], a: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>, SolveReport)>;
    /// Norm used for the local error estimate.
    fn error_norm(&self, e: &[f64]) -> f64;
    /// Largest discrete divergence `‖B u‖₂` over the velocity blocks, relative
    /// to the divergence carried by the boundary data alone.
    fn divergence_residual(&self, u: &[f64]) -> f64 {
        let _ = u;
        0.0
    }
    /// Per-mode norms recorded with every accepted step (empty by default).
    fn mode_norms(&self, u: &[f64]) -> Vec<f64> {
        let _ = u;
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperConfig {
    /// Local error tolerance.
    pub tolerance: f64,
    pub initial_step: f64,
    /// A step is rejected when the proposed next step falls below this
    /// fraction of the current one.
    pub reject_factor: f64,
    /// Time-step averaging is applied every this many accepted steps.
    pub averaging_period: usize,
    pub final_time: f64,
    /// Times every run must land on exactly. The final time is always added.
    pub barriers: Vec<f64>,
    pub max_consecutive_rejections: usize,
    /// Growth factor used when the error estimate vanishes.
    pub zero_error_growth: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            tolerance: 1e-4,
            initial_step: 1e-9,
            reject_factor: 0.7,
            averaging_period: 10,
            final_time: 10.0,
            barriers: vec![0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 6.0, 8.0, 10.0],
            max_consecutive_rejections: 20,
            zero_error_growth: 10.0,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("stepper.tolerance", "must be positive"));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::config("stepper.initial_step", "must be positive"));
        }
        if !(self.reject_factor > 0.0 && self.reject_factor < 1.0) {
            return Err(Error::config("stepper.reject_factor", "must lie in (0, 1)"));
        }
        if self.averaging_period < 2 {
            return Err(Error::config("stepper.averaging_period", "must be at least 2"));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::config("stepper.final_time", "must be positive"));
        }
        if self.barriers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("stepper.barriers", "must be strictly increasing"));
        }
        if self.barriers.iter().any(|&b| b < 0.0 || b > self.final_time) {
            return Err(Error::config("stepper.barriers", "must lie in [0, final_time]"));
        }
        if self.max_consecutive_rejections == 0 {
            return Err(Error::config("stepper.max_consecutive_rejections", "must be positive"));
        }
        Ok(())
    }

    /// Barriers with the final time appended.
    pub fn landing_times(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.barriers.iter().copied().filter(|&t| t <= self.final_time).collect();
        if b.last().map_or(true, |&l| l < self.final_time) {
            b.push(self.final_time);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub k: f64,
    pub accepted: bool,
    pub err_norm: Option<f64>,
    pub gmres_iters: usize,
    pub averaged: bool,
    /// Relative discrete divergence after the step (not written to CSV).
    #[serde(skip)]
    pub divergence: f64,
    /// Norms of the velocity modes after the step (not written to CSV).
    #[serde(skip)]
    pub mode_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub history: Vec<StepRecord>,
}

impl RunOutput {
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.t == t)
    }

    pub fn accepted(&self) -> impl Iterator<Item = &StepRecord> {
        self.history.iter().filter(|r| r.accepted)
    }
}

/// Piecewise-constant step sizes over time segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    /// `(start, end, step)`, contiguous and increasing.
    pub segments: Vec<(f64, f64, f64)>,
}

impl StepSchedule {
    /// Step size to use at time `t` and the end of its segment.
    pub fn lookup(&self, t: f64) -> Option<(f64, f64)> {
        self.segments
            .iter()
            .find(|&&(_, end, step)| t < end - 1e-9 * step)
            .map(|&(_, end, step)| (step, end))
    }

    pub fn final_time(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.1)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum StepMode<'a> {
    /// Error-controlled step sizes.
    Adaptive,
    /// Step sizes looked up from a schedule; no error control.
    Schedule(&'a StepSchedule),
}

/// `w = (1 + r) u − r u_prev` with `r = k_new / k_old`.
pub fn extrapolate_wind(u: &[f64], u_prev: &[f64], k_new: f64, k_old: f64) -> Vec<f64> {
    assert!(k_old > 0.0, "previous step must be positive");
    let r = k_new / k_old;
    u.iter().zip(u_prev).map(|(a, b)| (1.0 + r) * a - r * b).collect()
}

/// Trapezoid-rule update: `(u + k d, 2 d − a)`.
pub fn tr_update(u: &[f64], a: &[f64], d: &[f64], k: f64) -> (Vec<f64>, Vec<f64>) {
    let un = u.iter().zip(d).map(|(ui, di)| ui + k * di).collect();
    let an = a.iter().zip(d).map(|(ai, di)| 2.0 * di - ai).collect();
    (un, an)
}

/// Explicit AB2 velocity `u + (k/2)[(2 + r) a − r a_prev]`, `r = k_new / k_old`.
pub fn ab2_predict(u: &[f64], a: &[f64], a_prev: &[f64], k_new: f64, k_old: f64) -> Vec<f64> {
    let r = k_new / k_old;
    let h = 0.5 * k_new;
    u.iter().zip(a).zip(a_prev).map(|((ui, ai), bi)| ui + h * ((2.0 + r) * ai - r * bi)).collect()
}

/// Local error vector `(u − u*) / (3 (1 + k_old / k_new))`.
pub fn estimate_error(u: &[f64], u_star: &[f64], k_old: f64, k_new: f64) -> Vec<f64> {
    let c = 1.0 / (3.0 * (1.0 + k_old / k_new));
    u.iter().zip(u_star).map(|(a, b)| c * (a - b)).collect()
}

/// Proposed next step and whether the current one must be repeated.
pub fn select_step(k: f64, err: f64, tolerance: f64, reject_factor: f64, zero_error_growth: f64) -> (f64, bool) {
    if err <= f64::MIN_POSITIVE {
        return (k * zero_error_growth, false);
    }
    let k_next = k * (tolerance / err).cbrt();
    (k_next, k_next < reject_factor * k)
}

/// Two-level state of the integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct Levels {
    pub t_prev: f64,
    pub t: f64,
    pub u_prev: Vec<f64>,
    pub u: Vec<f64>,
    pub a_prev: Vec<f64>,
    pub a: Vec<f64>,
}

/// Time-step averaging after the update `d` over a step of size `k`:
/// the two stored levels are replaced by the midpoint of the old levels and
/// a half step from the old current level.
pub fn average_step(levels: &Levels, d: &[f64], k: f64) -> Levels {
    let t_star = levels.t;
    Levels {
        t_prev: 0.5 * (levels.t_prev + levels.t),
        t: t_star + 0.5 * k,
        u_prev: levels.u.iter().zip(&levels.u_prev).map(|(a, b)| 0.5 * (a + b)).collect(),
        a_prev: levels.a.iter().zip(&levels.a_prev).map(|(a, b)| 0.5 * (a + b)).collect(),
        u: levels.u.iter().zip(d).map(|(a, di)| a + 0.5 * k * di).collect(),
        a: d.to_vec(),
    }
}

/// Boundary update `(g(t + k) − u_D) / k` on the Dirichlet entries.
fn boundary_update<S: FlowSystem + ?Sized>(system: &S, u: &[f64], t_new: f64, k: f64) -> Vec<f64> {
    let g = system.boundary_values(t_new);
    let fixed = system.fixed();
    u.iter().zip(&g).zip(fixed).map(|((ui, gi), &f)| if f { (gi - ui) / k } else { 0.0 }).collect()
}

/// Next landing time strictly after `t`.
fn next_landing(landings: &[f64], t: f64) -> Option<f64> {
    landings.iter().copied().find(|&b| b > t)
}

/// Truncates `k` so that `t + k` does not overshoot `target`; returns the
/// step and the exact landing time if it lands.
fn truncate(t: f64, k: f64, target: Option<f64>) -> (f64, Option<f64>) {
    match target {
        Some(b) if t + k >= b - 1e-9 * k => (b - t, Some(b)),
        _ => (k, None),
    }
}

/// Integrates from `u0` at `t = 0` to the final time.
pub fn run<S: FlowSystem + ?Sized>(system: &mut S, config: &StepperConfig, mode: StepMode<'_>, u0: &[f64]) -> Result<RunOutput> {
    config.validate()?;
    let landings = config.landing_times();
    let t_end = config.final_time;
    if let StepMode::Schedule(s) = mode {
        if s.segments.is_empty() || s.final_time() < t_end - 1e-12 * t_end {
            return Err(Error::config("schedule", "schedule does not cover the final time"));
        }
    }
    let mut history = Vec::new();
    let mut snapshots = Vec::new();

    // proposes the step to take from time t: (k, landing time if exact)
    let propose = |t: f64, k_ctrl: f64| -> (f64, Option<f64>, bool) {
        let barrier = next_landing(&landings, t);
        match mode {
            StepMode::Adaptive => {
                let (k, land) = truncate(t, k_ctrl, barrier);
                (k, land, land.is_some())
            }
            StepMode::Schedule(s) => {
                let (step, seg_end) = s.lookup(t).expect("schedule covers the run");
                let target = match barrier {
                    Some(b) if b <= seg_end => Some(b),
                    _ => Some(seg_end),
                };
                let (k, land) = truncate(t, step, target);
                let at_barrier = land.is_some() && barrier == land;
                (k, land, at_barrier)
            }
        }
    };

    // start-up: acceleration at t = 0 with k_1 = k_0
    let (k1, land1, _) = propose(0.0, config.initial_step);
    let g0 = boundary_update(system, u0, land1.unwrap_or(k1), k1);
    let (a0, p0) = system.initial_acceleration(u0, &g0)?;
    history.push(StepRecord { step: 0, t: 0.0, k: k1, accepted: true, err_norm: None, gmres_iters: 0, averaged: false, divergence: system.divergence_residual(u0), mode_norms: system.mode_norms(u0) });
    if landings.first() == Some(&0.0) {
        snapshots.push(Snapshot { t: 0.0, u: u0.to_vec(), p: p0.clone() });
    }

    // step 1: wind from the initial acceleration
    let t1 = land1.unwrap_or(k1);
    let wind = u0.iter().zip(&a0).map(|(u, a)| u + k1 * a).collect::<Vec<_>>();
    let (d, p1, rep) = system.solve_oseen(k1, &wind, u0, &a0, &g0)?;
    let (u1, a1) = tr_update(u0, &a0, &d, k1);
    history.push(StepRecord { step: 1, t: t1, k: k1, accepted: true, err_norm: None, gmres_iters: rep.iterations, averaged: false, divergence: system.divergence_residual(&u1), mode_norms: system.mode_norms(&u1) });
    if land1.is_some() && landings.contains(&t1) {
        snapshots.push(Snapshot { t: t1, u: u1.clone(), p: p1.clone() });
    }
    let mut lv = Levels { t_prev: 0.0, t: t1, u_prev: u0.to_vec(), u: u1, a_prev: a0, a: a1 };
    let mut p = p1;
    let mut accepted = 1usize;
    // controller memory: the step the controller proposes next
    let mut k_ctrl = k1;
    let mut rejections = 0usize;

    while lv.t < t_end {
        let controlled = accepted >= 2;
        let (k, land, at_barrier) = propose(lv.t, k_ctrl);
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Stepping { time: lv.t, reason: format!("invalid step size {k}") });
        }
        let k_old = lv.t - lv.t_prev;
        let t_new = land.unwrap_or(lv.t + k);
        if !(t_new > lv.t) {
            return Err(Error::Stepping { time: lv.t, reason: format!("step size {k:e} below time resolution") });
        }
        let wind = extrapolate_wind(&lv.u, &lv.u_prev, k, k_old);
        let g = boundary_update(system, &lv.u, t_new, k);
        let (d, p_new, rep) = system.solve_oseen(k, &wind, &lv.u, &lv.a, &g)?;
        let (u_new, a_new) = tr_update(&lv.u, &lv.a, &d, k);
        let u_star = ab2_predict(&lv.u, &lv.a, &lv.a_prev, k, k_old);
        let err = system.error_norm(&estimate_error(&u_new, &u_star, k_old, k));
        let (k_next, reject) = select_step(k, err, config.tolerance, config.reject_factor, config.zero_error_growth);
        let reject = reject && controlled && matches!(mode, StepMode::Adaptive);

        if reject {
            history.push(StepRecord { step: accepted + 1, t: t_new, k, accepted: false, err_norm: Some(err), gmres_iters: rep.iterations, averaged: false, divergence: f64::NAN, mode_norms: Vec::new() });
            rejections += 1;
            if rejections >= config.max_consecutive_rejections {
                return Err(Error::Stepping { time: lv.t, reason: format!("{rejections} consecutive step rejections, last error estimate {err:e}") });
            }
            k_ctrl = k_next;
            continue;
        }
        rejections = 0;
        accepted += 1;
        if land.is_none() || matches!(mode, StepMode::Schedule(_)) {
            k_ctrl = k_next;
        }
        let average = accepted % config.averaging_period == 0 && !at_barrier;
        if average {
            lv = average_step(&lv, &d, k);
        } else {
            lv = Levels { t_prev: lv.t, t: t_new, u_prev: std::mem::take(&mut lv.u), u: u_new, a_prev: std::mem::take(&mut lv.a), a: a_new };
        }
        p = p_new;
        history.push(StepRecord {
            step: accepted,
            t: lv.t,
            k,
            accepted: true,
            err_norm: Some(err),
            gmres_iters: rep.iterations,
            averaged: average,
            divergence: system.divergence_residual(&lv.u),
            mode_norms: system.mode_norms(&lv.u),
        });
        if at_barrier {
            snapshots.push(Snapshot { t: lv.t, u: lv.u.clone(), p: p.clone() });
        }
    }
    let _ = p;
    Ok(RunOutput { snapshots, history })
}
