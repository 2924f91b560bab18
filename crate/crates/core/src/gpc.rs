//! Hermite polynomial chaos: multi-index sets, the orthonormal basis,
//! Gauss-Hermite rules and triple-product tensors.

use crate::error::{Error, Result};

/// Total-degree multi-indices in graded order. Within a degree the first
/// component decreases, so the zero index comes first and the degree-`p`
/// set is a prefix of every higher-degree set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub dim: usize,
    pub degree: usize,
    pub indices: Vec<Vec<usize>>,
}

pub fn build_multiindices(m: usize, p: usize) -> MultiIndexSet {
    assert!(m >= 1, "stochastic dimension must be at least 1");
    let mut indices = Vec::new();
    for d in 0..=p {
        let mut cur = vec![0; m];
        compositions(d, 0, &mut cur, &mut indices);
    }
    MultiIndexSet { dim: m, degree: p, indices }
}

fn compositions(rest: usize, pos: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos + 1 == cur.len() {
        cur[pos] = rest;
        out.push(cur.clone());
        return;
    }
    for v in (0..=rest).rev() {
        cur[pos] = v;
        compositions(rest - v, pos + 1, cur, out);
    }
}

impl MultiIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `C(n, k)` as an integer.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Probabilists' Hermite polynomials `He_0..He_n` at `x`.
pub fn hermite_values(n: usize, x: f64) -> Vec<f64> {
    let mut h = vec![1.0; n + 1];
    if n >= 1 {
        h[1] = x;
    }
    for k in 1..n {
        h[k + 1] = x * h[k] - k as f64 * h[k - 1];
    }
    h
}

/// Unit-norm Hermite polynomials `He_k / √(k!)` for `k = 0..=n`.
pub fn normalized_hermite_values(n: usize, x: f64) -> Vec<f64> {
    let mut h = vec![1.0; n + 1];
    if n >= 1 {
        h[1] = x;
    }
    for k in 1..n {
        let kf = k as f64;
        h[k + 1] = (x * h[k] - kf.sqrt() * h[k - 1]) / (kf + 1.0).sqrt();
    }
    h
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Orthonormal Hermite chaos on a multi-index set.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcBasis {
    pub set: MultiIndexSet,
}

impl GpcBasis {
    pub fn new(m: usize, p: usize) -> Self {
        GpcBasis { set: build_multiindices(m, p) }
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.set.dim
    }

    pub fn degree(&self) -> usize {
        self.set.degree
    }

    pub fn index(&self, l: usize) -> &[usize] {
        &self.set.indices[l]
    }

    /// All basis functions evaluated at `xi`.
    pub fn eval(&self, xi: &[f64]) -> Vec<f64> {
        assert_eq!(xi.len(), self.dim(), "point dimension differs from basis dimension");
        let p = self.degree();
        let tables: Vec<Vec<f64>> = xi.iter().map(|&x| normalized_hermite_values(p, x)).collect();
        self.set.indices.iter().map(|a| a.iter().zip(&tables).map(|(&k, t)| t[k]).product()).collect()
    }
}

/// Gauss-Hermite rule for the standard normal density: nodes ascending,
/// weights summing to one. Exact for polynomials of degree `2n - 1`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one point");
    // Newton iteration on orthonormal physicists' Hermite polynomials for
    // the weight exp(-x²), followed by rescaling to the normal density.
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = (j + 1) as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let mut weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// `E[ψ_a ψ_b ψ_c]` for unit-norm univariate Hermite polynomials.
pub fn hermite_triple(a: usize, b: usize, c: usize) -> f64 {
    let mut v = [a, b, c];
    v.sort_unstable();
    let [a, b, c] = v;
    if (a + b + c) % 2 == 1 || c > a + b {
        return 0.0;
    }
    let s = (a + b + c) / 2;
    let ln = 0.5 * (ln_factorial(a) + ln_factorial(b) + ln_factorial(c)) - ln_factorial(s - a) - ln_factorial(s - b) - ln_factorial(s - c);
    ln.exp()
}

/// Sparse matrices `H_ℓ[j][k] = E[ψ_ℓ ψ_j ψ_k]` for `ℓ < n̂` and
/// `j, k < n_ξ`.
#[derive(Debug, Clone)]
pub struct TripleProductTensor {
    pub n_xi: usize,
    /// Nonzeros `(j, k, value)` of each `H_ℓ`, row-major.
    pub matrices: Vec<Vec<(usize, usize, f64)>>,
}

impl TripleProductTensor {
    pub fn n_hat(&self) -> usize {
        self.matrices.len()
    }

    pub fn get(&self, l: usize, j: usize, k: usize) -> f64 {
        self.matrices[l].iter().find(|e| e.0 == j && e.1 == k).map_or(0.0, |e| e.2)
    }

    pub fn dense(&self, l: usize) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_xi]; self.n_xi];
        for &(j, k, v) in &self.matrices[l] {
            d[j][k] = v;
        }
        d
    }
}

/// Triple products between the coefficient basis (`large`) and the solution
/// basis (`small`). `ℓ` runs over `max(n_ν, n_ξ)` indices of whichever basis
/// is larger; both bases share the graded ordering.
pub fn triple_products(large: &GpcBasis, small: &GpcBasis) -> Result<TripleProductTensor> {
    if large.dim() != small.dim() {
        return Err(Error::Dimension(format!("bases in {} and {} variables", large.dim(), small.dim())));
    }
    let outer = if large.len() >= small.len() { large } else { small };
    let n_xi = small.len();
    let mut matrices = Vec::with_capacity(outer.len());
    for al in &outer.set.indices {
        let mut entries = Vec::new();
        for (j, aj) in small.set.indices.iter().enumerate() {
            for (k, ak) in small.set.indices.iter().enumerate() {
                let v: f64 = (0..al.len()).map(|d| hermite_triple(al[d], aj[d], ak[d])).product();
                if v != 0.0 {
                    entries.push((j, k, v));
                }
            }
        }
        matrices.push(entries);
    }
    Ok(TripleProductTensor { n_xi, matrices })
}
