//! Sparse direct solver: reverse Cuthill-McKee reordering followed by a
//! banded LU factorization with partial pivoting.
//!
//! The channel meshes are long and thin, so after reordering the profile of
//! every system matrix is a narrow band and a band factorization is close to
//! optimal in both fill and flops.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Reverse Cuthill-McKee ordering of the symmetrized pattern. Returns
/// `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|v| v.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, adj: &[Vec<usize>]| -> (usize, usize) {
        // (eccentricity, a node of minimum degree in the last level)
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut last = start;
        while let Some(v) = q.pop_front() {
            last = v;
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
            }
        }
        let ecc = dist[last];
        let far = (0..n).filter(|&v| dist[v] == ecc).min_by_key(|&v| (degree[v], v)).unwrap_or(last);
        (ecc, far)
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let (mut ecc, mut far) = bfs_levels(start, &adj);
        for _ in 0..8 {
            let (e2, f2) = bfs_levels(far, &adj);
            if e2 <= ecc {
                break;
            }
            start = far;
            ecc = e2;
            far = f2;
        }
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (degree[w], w));
            for w in nb {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// LU factors of a sparse matrix.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    perm: Vec<usize>,
    kl: usize,
    width_u: usize,
    /// Row k holds U[k, k..k+width_u).
    upper: Vec<f64>,
    /// Column k holds the multipliers of rows k+1..=k+kl.
    lower: Vec<f64>,
    pivots: Vec<usize>,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!("LU of non-square {}x{} matrix", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            for (j, _) in a.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                if pi > pj {
                    kl = kl.max(pi - pj);
                } else {
                    ku = ku.max(pj - pi);
                }
            }
        }
        // working rows cover columns [i - kl, i + kl + ku]
        let w = 2 * kl + ku + 1;
        let mut work = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                work[pi * w + (pj + kl - pi)] += v;
            }
        }
        let mut lower = vec![0.0; n * kl.max(1)];
        let mut pivots = vec![0usize; n];
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let uw = kl + ku + 1;

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = work[k * w + kl].abs();
            for i in k + 1..=last_row {
                let v = work[i * w + (k + kl - i)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale {
                return Err(Error::SingularPivot { column: perm[k] });
            }
            pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    work.swap(k * w + (j + kl - k), p * w + (j + kl - p));
                }
            }
            let pivot = work[k * w + kl];
            let ncols = last_col - k;
            for i in k + 1..=last_row {
                let off_i = i * w + (k + kl - i);
                let m = work[off_i] / pivot;
                lower[k * kl + (i - k - 1)] = m;
                work[off_i] = 0.0;
                if m == 0.0 {
                    continue;
                }
                let (head, tail) = work.split_at_mut(i * w);
                let row_k = &head[k * w + kl + 1..k * w + kl + 1 + ncols];
                let row_i = &mut tail[(k + 1 + kl - i)..(k + 1 + kl - i) + ncols];
                for (x, y) in row_i.iter_mut().zip(row_k) {
                    *x -= m * y;
                }
            }
        }
        let mut upper = vec![0.0; n * uw];
        for k in 0..n {
            let len = uw.min(n - k);
            upper[k * uw..k * uw + len].copy_from_slice(&work[k * w + kl..k * w + kl + len]);
        }
        Ok(SparseLu { n, perm, kl, width_u: uw, upper, lower, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// (lower, upper) bandwidth after reordering.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.width_u - 1 - self.kl)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        let kl = self.kl;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            if yk != 0.0 {
                let last = (k + kl).min(n - 1);
                for i in k + 1..=last {
                    y[i] -= self.lower[k * kl + (i - k - 1)] * yk;
                }
            }
        }
        let uw = self.width_u;
        for k in (0..n).rev() {
            let row = &self.upper[k * uw..k * uw + uw.min(n - k)];
            let mut s = y[k];
            for (d, u) in row.iter().enumerate().skip(1) {
                s -= u * y[k + d];
            }
            y[k] = s / row[0];
        }
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
    }
}
