//! Monte Carlo and sparse-grid collocation ensembles.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::{gauss_hermite, GpcBasis};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SampleKind {
    MonteCarlo { seed: u64 },
    Smolyak { level: usize },
}

/// Points in `ξ`-space with integration weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kind: SampleKind,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `n` i.i.d. standard Gaussian points in `m` dimensions with weights `1/n`.
pub fn draw_mc(n: usize, m: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::config("n_samples", "at least one sample is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                })
                .collect()
        })
        .collect();
    Ok(SampleSet { points, weights: vec![1.0 / n as f64; n], kind: SampleKind::MonteCarlo { seed } })
}

/// Compositions of `total` into `m` parts, each at least 1.
fn compositions(total: usize, m: usize) -> Vec<Vec<usize>> {
    if m == 1 {
        return if total >= 1 { vec![vec![total]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 1..=total.saturating_sub(m - 1) {
        for mut rest in compositions(total - first, m - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smolyak combination of Gauss–Hermite rules `U^i` (with `i` points).
/// Level `ℓ` integrates all polynomials of total degree `2ℓ + 1` exactly.
/// Coincident nodes are merged, so weights may be negative.
pub fn build_sparse_grid(m: usize, level: usize) -> Result<SampleSet> {
    if m == 0 {
        return Err(Error::config("m_xi", "the stochastic dimension must be positive"));
    }
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (1..=level + 1).map(gauss_hermite).collect();
    let q = level + m;
    // merge on coordinates rounded to well below the node spacing
    let key = |x: &[f64]| x.iter().map(|v| (v * 1e10).round() as i64).collect::<Vec<_>>();
    let mut merged: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    let lo = q.saturating_sub(m - 1).max(m);
    for total in lo..=q {
        let coef = if (q - total) % 2 == 0 { 1.0 } else { -1.0 } * binomial(m - 1, q - total);
        if coef == 0.0 {
            continue;
        }
        for idx in compositions(total, m) {
            let mut pts: Vec<(Vec<f64>, f64)> = vec![(Vec::with_capacity(m), coef)];
            for &i in &idx {
                let (x, w) = &rules[i - 1];
                let mut next = Vec::with_capacity(pts.len() * x.len());
                for (p, pw) in &pts {
                    for (xi, wi) in x.iter().zip(w) {
                        let mut np = p.clone();
                        np.push(*xi);
                        next.push((np, pw * wi));
                    }
                }
                pts = next;
            }
            for (p, w) in pts {
                merged.entry(key(&p)).and_modify(|e| e.1 += w).or_insert((p, w));
            }
        }
    }
    let (points, weights): (Vec<_>, Vec<_>) = merged.into_values().filter(|(_, w)| w.abs() > 1e-15).unzip();
    Ok(SampleSet { points, weights, kind: SampleKind::Smolyak { level } })
}

/// Per-sample results; a failed sample carries its error message.
#[derive(Debug)]
pub struct EnsembleResult<T> {
    pub runs: Vec<std::result::Result<T, String>>,
}

impl<T> EnsembleResult<T> {
    pub fn failures(&self) -> Vec<(usize, &str)> {
        self.runs.iter().enumerate().filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e.as_str()))).collect()
    }

    /// All results, or an error naming the failed samples.
    pub fn all_ok(&self) -> Result<Vec<&T>> {
        let failures = self.failures();
        if let Some(&(i, msg)) = failures.first() {
            return Err(Error::Stepping { time: f64::NAN, reason: format!("{} of {} samples failed; sample {i}: {msg}", failures.len(), self.runs.len()) });
        }
        Ok(self.runs.iter().map(|r| r.as_ref().unwrap()).collect())
    }
}

/// Runs `solve` at every sample point on up to `threads` worker threads.
/// Results are stored by sample index, so they do not depend on scheduling.
pub fn run_ensemble<T, F>(samples: &SampleSet, threads: usize, solve: F) -> EnsembleResult<T>
where
    T: Send,
    F: Fn(usize, &[f64]) -> Result<T> + Sync,
{
    let n = samples.len();
    let threads = threads.clamp(1, n.max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<std::result::Result<T, String>>> = (0..n).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = solve(i, &samples.points[i]).map_err(|e| e.to_string());
                if let Err(e) = &r {
                    log::warn!("sample {i} failed: {e}");
                }
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    EnsembleResult { runs: slots.into_iter().map(|r| r.expect("every sample is visited")).collect() }
}

/// Discrete projection `c_k = Σ_q u^{(q)} ψ_k(ξ_q) w_q` of per-sample fields.
pub fn project_pseudospectral(samples: &SampleSet, values: &[&[f64]], basis: &GpcBasis) -> Result<Vec<Vec<f64>>> {
    if values.len() != samples.len() {
        return Err(Error::Dimension(format!("{} fields for {} samples", values.len(), samples.len())));
    }
    let n = values.first().map_or(0, |v| v.len());
    let mut coeffs = vec![vec![0.0; n]; basis.len()];
    for ((xi, w), u) in samples.points.iter().zip(&samples.weights).zip(values) {
        if u.len() != n {
            return Err(Error::Dimension("sample fields differ in length".into()));
        }
        let psi = basis.eval(xi);
        for (c, p) in coeffs.iter_mut().zip(&psi) {
            let s = p * w;
            c.iter_mut().zip(u.iter()).for_each(|(c, v)| *c += s * v);
        }
    }
    Ok(coeffs)
}

/// Pointwise mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// False when the variance could not be estimated (a single sample).
    pub variance_defined: bool,
}

/// Sample mean and unbiased (`1/(n−1)`) variance.
pub fn ensemble_moments(values: &[&[f64]]) -> Result<Moments> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Dimension("no samples".into()));
    }
    let len = values[0].len();
    let mut mean = vec![0.0; len];
    for v in values {
        mean.iter_mut().zip(v.iter()).for_each(|(m, x)| *m += x / n as f64);
    }
    if n == 1 {
        return Ok(Moments { mean, variance: vec![0.0; len], variance_defined: false });
    }
    let mut variance = vec![0.0; len];
    for v in values {
        variance.iter_mut().zip(v.iter().zip(&mean)).for_each(|(s, (x, m))| *s += (x - m) * (x - m));
    }
    variance.iter_mut().for_each(|s| *s /= (n - 1) as f64);
    Ok(Moments { mean, variance, variance_defined: true })
}

/// Mean (first coefficient) and variance (sum of the remaining squared
/// coefficients) of an orthonormal chaos expansion.
pub fn gpc_moments(coeffs: &[Vec<f64>]) -> Moments {
    let mean = coeffs[0].clone();
    let mut variance = vec![0.0; mean.len()];
    for c in &coeffs[1..] {
        variance.iter_mut().zip(c).for_each(|(s, v)| *s += v * v);
    }
    Moments { mean, variance, variance_defined: true }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mc_is_reproducible() {
        let a = draw_mc(50, 2, 42).unwrap();
        let b = draw_mc(50, 2, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.weights.iter().all(|&w| w == 1.0 / 50.0));
        assert!(draw_mc(0, 2, 1).is_err());
    }

    #[test]
    fn one_dimensional_grid_is_gauss_hermite() {
        let g = build_sparse_grid(1, 1).unwrap();
        assert_eq!(g.len(), 2);
        for (p, w) in g.points.iter().zip(&g.weights) {
            assert!((p[0].abs() - 1.0).abs() < 1e-14);
            assert!((w - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn two_samples_moments() {
        let a = [1.0, 4.0];
        let b = [3.0, 0.0];
        let m = ensemble_moments(&[&a, &b]).unwrap();
        assert_eq!(m.mean, vec![2.0, 2.0]);
        assert_eq!(m.variance, vec![2.0, 8.0]);
        let single = ensemble_moments(&[&a]).unwrap();
        assert!(!single.variance_defined);
        assert_eq!(single.variance, vec![0.0, 0.0]);
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(4, 2).len(), 3);
        assert_eq!(compositions(5, 3).len(), 6);
    }
}
