//! Post-processing: probe statistics, density estimates, mode-norm series
//! and cross-method comparison tables.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::gpc::GpcBasis;
use crate::stepper::RunOutput;

/// Number of points in every density evaluation grid.
pub const PDF_GRID_POINTS: usize = 200;
/// Surrogate samples drawn to estimate densities from chaos expansions.
pub const SURROGATE_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sg,
    Mc,
    Sc,
    Det,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sg => "sg",
            Method::Mc => "mc",
            Method::Sc => "sc",
            Method::Det => "det",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub source: Method,
    pub time: f64,
}

impl PdfEstimate {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.grid.windows(2).zip(self.density.windows(2)).map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1])).sum()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Silverman's rule `1.06 σ n^{-1/5}`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let (_, sd) = mean_std(values);
    1.06 * sd * (values.len() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate on `PDF_GRID_POINTS` points spanning the
/// data range extended by three bandwidths. Without a forced bandwidth,
/// Silverman's rule is used; all-equal data get a narrow kernel and a warning.
pub fn kde(values: &[f64], bandwidth: Option<f64>, source: Method, time: f64) -> Result<PdfEstimate> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("density estimate needs finite data".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(Error::config("bandwidth", format!("must be positive, got {h}"))),
        None => {
            let h = silverman_bandwidth(values);
            if h > 0.0 {
                h
            } else {
                log::warn!("degenerate data for the {} density at t = {time}; using a narrow kernel", source.name());
                1e-6 * lo.abs().max(1e-6)
            }
        }
    };
    let (a, b) = (lo - 3.0 * h, hi + 3.0 * h);
    let n = PDF_GRID_POINTS;
    let grid: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&x| norm * values.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    Ok(PdfEstimate { grid, density, bandwidth: h, source, time })
}

/// Samples of a scalar chaos expansion at `n` Gaussian points.
pub fn surrogate_samples(coeffs: &[f64], basis: &GpcBasis, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let xi: Vec<f64> = (0..basis.dim())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                })
                .collect();
            basis.eval(&xi).iter().zip(coeffs).map(|(p, c)| p * c).sum()
        })
        .collect()
}

/// Density of a probe quantity from samples (MC) or a chaos expansion (SG, SC).
pub enum ProbeData<'a> {
    Samples(&'a [f64]),
    Expansion { coeffs: &'a [f64], basis: &'a GpcBasis, seed: u64 },
}

pub fn probe_pdf(data: ProbeData<'_>, source: Method, time: f64) -> Result<PdfEstimate> {
    match data {
        ProbeData::Samples(v) => {
            if v.len() < 2 {
                return Err(Error::Dimension("a density needs at least two samples".into()));
            }
            kde(v, None, source, time)
        }
        ProbeData::Expansion { coeffs, basis, seed } => kde(&surrogate_samples(coeffs, basis, SURROGATE_SAMPLES, seed), None, source, time),
    }
}

/// Euclidean norm of every velocity mode after each accepted step.
pub fn coefficient_norm_series(output: &RunOutput) -> Vec<(f64, Vec<f64>)> {
    output.accepted().map(|r| (r.t, r.mode_norms.clone())).collect()
}

/// Mean and variance of both velocity components at the probe points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMoments {
    pub t: f64,
    pub mean: Vec<[f64; 2]>,
    pub variance: Vec<[f64; 2]>,
    /// Sample count for sampling estimators (enables standard errors).
    pub n_samples: Option<usize>,
}

impl ProbeMoments {
    pub fn std_error(&self, probe: usize, c: usize) -> Option<f64> {
        self.n_samples.map(|n| (self.variance[probe][c] / n as f64).sqrt())
    }
}

fn probe_values(space: &FemSpace, u: &[f64], probes: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    probes
        .iter()
        .map(|p| space.velocity_at(u, p[0], p[1]).ok_or_else(|| Error::config("probes", format!("({}, {}) is outside the domain", p[0], p[1]))))
        .collect()
}

/// Probe moments of a stacked chaos state (mode-major velocity blocks).
pub fn gpc_probe_moments(space: &FemSpace, t: f64, u: &[f64], probes: &[[f64; 2]]) -> Result<ProbeMoments> {
    let nu = space.dofs.n_u;
    let modes: Vec<Vec<[f64; 2]>> = u.chunks(nu).map(|c| probe_values(space, c, probes)).collect::<Result<_>>()?;
    let mean = modes[0].clone();
    let variance = (0..probes.len())
        .map(|i| {
            let mut v = [0.0; 2];
            for m in &modes[1..] {
                v[0] += m[i][0] * m[i][0];
                v[1] += m[i][1] * m[i][1];
            }
            v
        })
        .collect();
    Ok(ProbeMoments { t, mean, variance, n_samples: None })
}

/// Probe samples of each velocity component, `[probe][component][sample]`.
pub fn probe_samples(space: &FemSpace, fields: &[&[f64]], probes: &[[f64; 2]]) -> Result<Vec<[Vec<f64>; 2]>> {
    let mut out: Vec<[Vec<f64>; 2]> = probes.iter().map(|_| [Vec::new(), Vec::new()]).collect();
    for u in fields {
        for (o, v) in out.iter_mut().zip(probe_values(space, u, probes)?) {
            o[0].push(v[0]);
            o[1].push(v[1]);
        }
    }
    Ok(out)
}

/// Sample mean and unbiased variance at the probes.
pub fn sample_probe_moments(space: &FemSpace, t: f64, fields: &[&[f64]], probes: &[[f64; 2]]) -> Result<ProbeMoments> {
    let samples = probe_samples(space, fields, probes)?;
    let mut mean = Vec::new();
    let mut variance = Vec::new();
    for s in &samples {
        let (m0, s0) = mean_std(&s[0]);
        let (m1, s1) = mean_std(&s[1]);
        mean.push([m0, m1]);
        variance.push([s0 * s0, s1 * s1]);
    }
    Ok(ProbeMoments { t, mean, variance, n_samples: Some(fields.len()) })
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub probe: usize,
    pub component: usize,
    pub sg_mean: f64,
    pub sc_mean: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    pub sg_variance: f64,
    pub sc_variance: f64,
    pub mc_variance: f64,
    /// `|SG − SC|` of the mean relative to the largest SC mean magnitude at this time.
    pub sg_sc_mean_rel: f64,
    /// `|SG − SC|` of the variance relative to the largest SC variance at this time.
    pub sg_sc_variance_rel: f64,
    /// `|SG − MC|` of the mean in units of the MC standard error.
    pub sg_mc_mean_in_se: f64,
}

fn by_time(set: &[ProbeMoments], t: f64) -> Option<&ProbeMoments> {
    set.iter().find(|m| (m.t - t).abs() <= 1e-12 * t.abs().max(1.0))
}

/// Tables of probe moments per method and their differences at common
/// barriers. Every barrier in `barriers` must be present in all three sets.
pub fn compare_report(barriers: &[f64], sg: &[ProbeMoments], sc: &[ProbeMoments], mc: &[ProbeMoments]) -> Result<Vec<ComparisonRow>> {
    let missing: Vec<f64> = barriers
        .iter()
        .copied()
        .filter(|&t| by_time(sg, t).is_none() || by_time(sc, t).is_none() || by_time(mc, t).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::BarrierMismatch(missing));
    }
    let mut rows = Vec::new();
    for &t in barriers {
        let (g, s, m) = (by_time(sg, t).unwrap(), by_time(sc, t).unwrap(), by_time(mc, t).unwrap());
        let mean_scale = s.mean.iter().flat_map(|v| v.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
        let var_scale = s.variance.iter().flat_map(|v| v.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
        let rel = |d: f64, scale: f64| if scale > 0.0 { d / scale } else { d };
        for probe in 0..g.mean.len() {
            for c in 0..2 {
                let se = m.std_error(probe, c).unwrap_or(0.0);
                let dm = (g.mean[probe][c] - m.mean[probe][c]).abs();
                rows.push(ComparisonRow {
                    t,
                    probe,
                    component: c,
                    sg_mean: g.mean[probe][c],
                    sc_mean: s.mean[probe][c],
                    mc_mean: m.mean[probe][c],
                    mc_std_error: se,
                    sg_variance: g.variance[probe][c],
                    sc_variance: s.variance[probe][c],
                    mc_variance: m.variance[probe][c],
                    sg_sc_mean_rel: rel((g.mean[probe][c] - s.mean[probe][c]).abs(), mean_scale),
                    sg_sc_variance_rel: rel((g.variance[probe][c] - s.variance[probe][c]).abs(), var_scale),
                    sg_mc_mean_in_se: if se > 0.0 { dm / se } else if dm == 0.0 { 0.0 } else { f64::INFINITY },
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_bandwidth_single_value_is_a_gaussian_bump() {
        let p = kde(&[2.0], Some(0.5), Method::Mc, 0.0).unwrap();
        for (x, d) in p.grid.iter().zip(&p.density) {
            let expect = (-0.5 * ((x - 2.0) / 0.5f64).powi(2)).exp() / (0.5 * (2.0 * std::f64::consts::PI).sqrt());
            assert!((d - expect).abs() < 1e-14);
        }
        assert!((p.integral() - 1.0).abs() < 0.01);
    }

    #[test]
    fn degenerate_data_give_narrow_estimate() {
        let p = kde(&[1.5, 1.5, 1.5], None, Method::Sc, 1.0).unwrap();
        assert!(p.bandwidth > 0.0 && p.bandwidth < 1e-5);
        assert!((p.integral() - 1.0).abs() < 0.01);
    }

    #[test]
    fn comparison_requires_common_barriers() {
        let pm = |t| ProbeMoments { t, mean: vec![[1.0, 0.0]], variance: vec![[0.1, 0.0]], n_samples: None };
        let err = compare_report(&[0.1, 1.0], &[pm(0.1), pm(1.0)], &[pm(0.1)], &[pm(0.1), pm(1.0)]).unwrap_err();
        assert!(matches!(err, Error::BarrierMismatch(ref m) if m == &vec![1.0]));
        let rows = compare_report(&[0.1], &[pm(0.1)], &[pm(0.1)], &[pm(0.1)]).unwrap();
        assert!(rows.iter().all(|r| r.sg_sc_mean_rel == 0.0 && r.sg_sc_variance_rel == 0.0 && r.sg_mc_mean_in_se == 0.0));
    }
}
