//! Gaussian random field with separable exponential covariance and the
//! lognormal viscosity built from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::GpcBasis;
use crate::mesh::{Mesh, Rect};

/// Largest number of retained modes.
pub const MAX_KL_MODES: usize = 64;

/// Eigenpair of the kernel `exp(-|x - y| / L)` on `[-a, a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEigenpair1d {
    pub eigenvalue: f64,
    pub frequency: f64,
    pub even: bool,
    norm: f64,
}

impl KernelEigenpair1d {
    /// Eigenfunction at `x` (relative to the interval centre).
    pub fn eval(&self, x: f64) -> f64 {
        if self.even {
            (self.frequency * x).cos() / self.norm
        } else {
            (self.frequency * x).sin() / self.norm
        }
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The `count` largest eigenpairs of the exponential kernel with
/// correlation length `corr` on an interval of half-width `a`, sorted by
/// decreasing eigenvalue.
pub fn exponential_kernel_eigenpairs(corr: f64, a: f64, count: usize) -> Vec<KernelEigenpair1d> {
    let c = 1.0 / corr;
    let pi = std::f64::consts::PI;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        // even and odd roots alternate, one of each per half-period
        let (even, lo, hi) = if i % 2 == 0 {
            let k = (i / 2) as f64;
            (true, k * pi / a, (k + 0.5) * pi / a)
        } else {
            let k = (i / 2) as f64;
            (false, (k + 0.5) * pi / a, (k + 1.0) * pi / a)
        };
        let w = if even {
            bisect(|w| c * (w * a).cos() - w * (w * a).sin(), lo, hi)
        } else {
            bisect(|w| w * (w * a).cos() + c * (w * a).sin(), lo, hi)
        };
        let s = (2.0 * w * a).sin() / (2.0 * w);
        let norm = if even { (a + s).sqrt() } else { (a - s).sqrt() };
        out.push(KernelEigenpair1d { eigenvalue: 2.0 * c / (w * w + c * c), frequency: w, even, norm });
    }
    out
}

/// Separable two-dimensional KL modes on a rectangle, unit variance.
#[derive(Debug, Clone)]
pub struct KlModes {
    pub rect: Rect,
    pub corr_x: f64,
    pub corr_y: f64,
    /// `(x pair, y pair)` per mode.
    pairs: Vec<(KernelEigenpair1d, KernelEigenpair1d)>,
}

impl KlModes {
    pub fn new(rect: Rect, corr_x: f64, corr_y: f64, m: usize) -> Result<Self> {
        if !(corr_x > 0.0 && corr_y > 0.0) {
            return Err(Error::config("correlation_length", "correlation lengths must be positive"));
        }
        if m == 0 || m > MAX_KL_MODES {
            return Err(Error::config("m_xi", format!("number of modes must be in 1..={MAX_KL_MODES}, got {m}")));
        }
        let ex = exponential_kernel_eigenpairs(corr_x, 0.5 * (rect.x1 - rect.x0), m);
        let ey = exponential_kernel_eigenpairs(corr_y, 0.5 * (rect.y1 - rect.y0), m);
        let mut pairs: Vec<(KernelEigenpair1d, KernelEigenpair1d)> = Vec::with_capacity(m * m);
        for px in &ex {
            for py in &ey {
                pairs.push((*px, *py));
            }
        }
        // stable sort keeps the x-major order on ties
        pairs.sort_by(|a, b| (b.0.eigenvalue * b.1.eigenvalue).total_cmp(&(a.0.eigenvalue * a.1.eigenvalue)));
        pairs.truncate(m);
        Ok(KlModes { rect, corr_x, corr_y, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|(a, b)| a.eigenvalue * b.eigenvalue).collect()
    }

    /// Unit-variance eigenfunction `f_j` at a point.
    pub fn eigenfunction(&self, j: usize, x: f64, y: f64) -> f64 {
        let xc = 0.5 * (self.rect.x0 + self.rect.x1);
        let yc = 0.5 * (self.rect.y0 + self.rect.y1);
        let (px, py) = &self.pairs[j];
        px.eval(x - xc) * py.eval(y - yc)
    }

    /// Fraction of the total variance `area` captured by the modes.
    pub fn variance_capture(&self) -> f64 {
        self.eigenvalues().iter().sum::<f64>() / self.rect.area()
    }
}

/// Gaussian field `g_0 + Σ_j g_j(x) ξ_j` on the mesh nodes.
#[derive(Debug, Clone)]
pub struct GaussianFieldKL {
    pub mean: f64,
    pub sigma: f64,
    pub modes: KlModes,
    /// `√λ_j f_j` at the nodes, for unit standard deviation.
    pub unit_modes: Vec<Vec<f64>>,
}

impl GaussianFieldKL {
    /// `g_j = σ √λ_j f_j` at the nodes.
    pub fn mode_fields(&self) -> Vec<Vec<f64>> {
        self.unit_modes.iter().map(|m| m.iter().map(|v| self.sigma * v).collect()).collect()
    }

    /// `Σ_j g_j(x)²` at the nodes.
    pub fn pointwise_variance(&self) -> Vec<f64> {
        let n = self.unit_modes.first().map_or(0, |m| m.len());
        let s2 = self.sigma * self.sigma;
        (0..n).map(|i| s2 * self.unit_modes.iter().map(|m| m[i] * m[i]).sum::<f64>()).collect()
    }

    pub fn dim(&self) -> usize {
        self.unit_modes.len()
    }
}

/// KL expansion on the bounding rectangle of the mesh, sampled at nodes.
pub fn kl_expand(mesh: &Mesh, corr_x: f64, corr_y: f64, sigma: f64, m: usize) -> Result<GaussianFieldKL> {
    if !(sigma >= 0.0) {
        return Err(Error::config("sigma_g", "standard deviation must be non-negative"));
    }
    let g = &mesh.geometry;
    let rect = Rect::new(0.0, g.length, -g.half_height, g.half_height);
    let modes = KlModes::new(rect, corr_x, corr_y, m)?;
    let lambdas = modes.eigenvalues();
    let unit_modes = (0..m)
        .map(|j| {
            let s = lambdas[j].sqrt();
            mesh.nodes.iter().map(|p| s * modes.eigenfunction(j, p[0], p[1])).collect()
        })
        .collect();
    Ok(GaussianFieldKL { mean: 0.0, sigma, modes, unit_modes })
}

/// Result of matching the lognormal mean and coefficient of variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub g0: f64,
    pub sigma_g: f64,
    /// Node where the field variance is largest.
    pub node: usize,
    /// Gaussian standard deviation at that node.
    pub s: f64,
}

/// Chooses constant `g_0` and `σ_g` so that at the node of largest variance
/// the lognormal mean is `mean` and its coefficient of variation is `cov`.
pub fn calibrate(mean: f64, cov: f64, kl: &GaussianFieldKL) -> Result<Calibration> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::config("nu_mean", format!("mean viscosity must be positive, got {mean}")));
    }
    if !(cov >= 0.0 && cov.is_finite()) {
        return Err(Error::config("CoV", format!("coefficient of variation must be non-negative, got {cov}")));
    }
    let n = kl.unit_modes.first().map_or(0, |m| m.len());
    let (node, raw2) = (0..n)
        .map(|i| (i, kl.unit_modes.iter().map(|m| m[i] * m[i]).sum::<f64>()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let s2 = (cov * cov).ln_1p();
    let s = s2.sqrt();
    let sigma_g = if cov == 0.0 || raw2 == 0.0 { 0.0 } else { s / raw2.sqrt() };
    Ok(Calibration { g0: mean.ln() - 0.5 * s2, sigma_g, node, s })
}

impl GaussianFieldKL {
    pub fn calibrated(mut self, c: &Calibration) -> Self {
        self.mean = c.g0;
        self.sigma = c.sigma_g;
        self
    }
}

/// `ν(x, ξ) = Σ_ℓ ν_ℓ(x) ψ_ℓ(ξ)` with nodal coefficient fields.
#[derive(Debug, Clone)]
pub struct LognormalViscosity {
    pub basis: GpcBasis,
    /// `coeffs[ℓ][node]`.
    pub coeffs: Vec<Vec<f64>>,
}

/// Chaos coefficients of `exp(g_0 + Σ g_j ξ_j)`:
/// `ν_ℓ = exp(g_0 + ½ Σ g_j²) Π_j g_j^{α_j} / √(α_j!)`.
pub fn lognormal_coeffs(kl: &GaussianFieldKL, basis: &GpcBasis) -> Result<LognormalViscosity> {
    if basis.dim() != kl.dim() {
        return Err(Error::Dimension(format!("basis in {} variables for a field with {} modes", basis.dim(), kl.dim())));
    }
    let g = kl.mode_fields();
    let n = g.first().map_or(0, |m| m.len());
    let p = basis.degree();
    let mut inv_sqrt_fact = vec![1.0; p + 1];
    for k in 1..=p {
        inv_sqrt_fact[k] = inv_sqrt_fact[k - 1] / (k as f64).sqrt();
    }
    let base: Vec<f64> = (0..n).map(|i| (kl.mean + 0.5 * g.iter().map(|m| m[i] * m[i]).sum::<f64>()).exp()).collect();
    let coeffs = basis
        .set
        .indices
        .iter()
        .map(|alpha| {
            (0..n)
                .map(|i| {
                    let mut v = base[i];
                    for (j, &a) in alpha.iter().enumerate() {
                        if a > 0 {
                            v *= g[j][i].powi(a as i32) * inv_sqrt_fact[a];
                        }
                    }
                    v
                })
                .collect()
        })
        .collect();
    Ok(LognormalViscosity { basis: basis.clone(), coeffs })
}

impl LognormalViscosity {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Mean field `ν_1`.
    pub fn mean(&self) -> &[f64] {
        &self.coeffs[0]
    }

    /// Variance of the truncated expansion, `Σ_{ℓ≥2} ν_ℓ²`, at the nodes.
    pub fn variance(&self) -> Vec<f64> {
        let n = self.coeffs[0].len();
        (0..n).map(|i| self.coeffs[1..].iter().map(|c| c[i] * c[i]).sum()).collect()
    }
}

/// Realization `Σ_ℓ ν_ℓ ψ_ℓ(ξ)` at the nodes. Nonpositive values can occur
/// far in the tails because the expansion is truncated; they are reported
/// through the log and in the returned count.
pub fn sample_viscosity(visc: &LognormalViscosity, xi: &[f64]) -> (Vec<f64>, usize) {
    assert!(xi.iter().all(|v| v.is_finite()), "sample point must be finite");
    let psi = visc.basis.eval(xi);
    let n = visc.coeffs[0].len();
    let mut out = vec![0.0; n];
    for (c, p) in visc.coeffs.iter().zip(&psi) {
        if *p != 0.0 {
            for (o, v) in out.iter_mut().zip(c) {
                *o += p * v;
            }
        }
    }
    let bad = out.iter().filter(|&&v| v <= 0.0).count();
    if bad > 0 {
        log::warn!("viscosity realization at {xi:?} is nonpositive at {bad} nodes (expansion truncation)");
    }
    (out, bad)
}
