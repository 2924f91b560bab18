//! Compressed sparse row storage.
//!
//! Column indices are kept sorted and unique within each row. Most matrices in
//! this crate share one of a handful of sparsity patterns (Q2-Q2, Q1-Q1,
//! Q1-Q2), so the routines that combine matrices check for a shared pattern
//! first and fall back to a merge otherwise.

use std::sync::Arc;

/// Row offsets and column indices of a CSR matrix, shareable between
/// matrices assembled on the same connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Pattern {
    /// Builds a pattern from unsorted, possibly repeated (row, col) pairs.
    pub fn from_entries(nrows: usize, ncols: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); nrows];
        for (i, j) in entries {
            assert!(i < nrows && j < ncols, "entry ({i},{j}) outside {nrows}x{ncols}");
            rows[i].push(j);
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len());
        }
        Pattern { nrows, ncols, row_ptr, col_idx }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Position of entry (i, j) in the value array, if present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].binary_search(&j).ok().map(|p| lo + p)
    }
}

/// A real sparse matrix in CSR format.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix on the given pattern.
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let nnz = pattern.nnz();
        CsrMatrix { pattern, values: vec![0.0; nnz] }
    }

    pub fn from_parts(pattern: Arc<Pattern>, values: Vec<f64>) -> Self {
        assert_eq!(pattern.nnz(), values.len(), "value count does not match pattern");
        CsrMatrix { pattern, values }
    }

    /// Sums duplicate triplets.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let pattern = Arc::new(Pattern::from_entries(nrows, ncols, triplets.iter().map(|&(i, j, _)| (i, j))));
        let mut m = CsrMatrix::zeros(pattern);
        for &(i, j, v) in triplets {
            let pos = m.pattern.find(i, j).expect("entry in pattern");
            m.values[pos] += v;
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let pattern = Arc::new(Pattern::from_entries(n, n, (0..n).map(|i| (i, i))));
        CsrMatrix { pattern, values: vec![1.0; n] }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = CsrMatrix::identity(diag.len());
        m.values.copy_from_slice(diag);
        m
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.pattern.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.pattern.col_idx
    }

    /// Entry (i, j); zero when outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Iterates over the stored entries of row `i` as (column, value).
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.pattern.row_ptr[i];
        let hi = self.pattern.row_ptr[i + 1];
        self.pattern.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols());
        debug_assert_eq!(y.len(), self.nrows());
        let rp = &self.pattern.row_ptr;
        let ci = &self.pattern.col_idx;
        for i in 0..self.nrows() {
            let mut s = 0.0;
            for p in rp[i]..rp[i + 1] {
                s += self.values[p] * x[ci[p]];
            }
            y[i] = s;
        }
    }

    /// y += alpha A x
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols());
        debug_assert_eq!(y.len(), self.nrows());
        let rp = &self.pattern.row_ptr;
        let ci = &self.pattern.col_idx;
        for i in 0..self.nrows() {
            let mut s = 0.0;
            for p in rp[i]..rp[i + 1] {
                s += self.values[p] * x[ci[p]];
            }
            y[i] += alpha * s;
        }
    }

    /// `y1 += alpha A x1` and `y2 += alpha A x2` in one sweep over `A`.
    pub fn matvec_add_pair(&self, alpha: f64, x1: &[f64], x2: &[f64], y1: &mut [f64], y2: &mut [f64]) {
        let rp = &self.pattern.row_ptr;
        let ci = &self.pattern.col_idx;
        for i in 0..self.nrows() {
            let (mut s1, mut s2) = (0.0, 0.0);
            for p in rp[i]..rp[i + 1] {
                let v = self.values[p];
                s1 += v * x1[ci[p]];
                s2 += v * x2[ci[p]];
            }
            y1[i] += alpha * s1;
            y2[i] += alpha * s2;
        }
    }

    /// y += alpha Aᵀ x
    pub fn matvec_transpose_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows());
        debug_assert_eq!(y.len(), self.ncols());
        let rp = &self.pattern.row_ptr;
        let ci = &self.pattern.col_idx;
        for i in 0..self.nrows() {
            let xi = alpha * x[i];
            if xi == 0.0 {
                continue;
            }
            for p in rp[i]..rp[i + 1] {
                y[ci[p]] += self.values[p] * xi;
            }
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                triplets.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols(), self.nrows(), &triplets)
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// Linear combination Σ αᵢ Aᵢ. All terms must share the dimensions; when
    /// they also share the pattern the result reuses it.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        assert!(!terms.is_empty(), "empty linear combination");
        let first = terms[0].1;
        if terms.iter().all(|(_, m)| first.same_pattern(m)) {
            let mut values = vec![0.0; first.nnz()];
            for (alpha, m) in terms {
                for (v, mv) in values.iter_mut().zip(&m.values) {
                    *v += alpha * mv;
                }
            }
            return CsrMatrix { pattern: first.pattern.clone(), values };
        }
        let mut triplets = Vec::new();
        for (alpha, m) in terms {
            assert_eq!((m.nrows(), m.ncols()), (first.nrows(), first.ncols()), "dimension mismatch");
            for i in 0..m.nrows() {
                for (j, v) in m.row(i) {
                    triplets.push((i, j, alpha * v));
                }
            }
        }
        CsrMatrix::from_triplets(first.nrows(), first.ncols(), &triplets)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows().min(self.ncols())).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Symmetric elimination of the flagged unknowns: their rows and columns
    /// are cleared and a unit diagonal is placed on the row. The pattern must
    /// already contain the diagonal of flagged rows.
    pub fn constrain_symmetric(&mut self, fixed: &[bool]) {
        assert_eq!(self.nrows(), self.ncols());
        assert_eq!(fixed.len(), self.nrows());
        let rp = self.pattern.row_ptr.clone();
        for i in 0..self.nrows() {
            for p in rp[i]..rp[i + 1] {
                let j = self.pattern.col_idx[p];
                if fixed[i] || fixed[j] {
                    self.values[p] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }

    /// Zeroes the rows and columns of the flagged unknowns, diagonal included.
    pub fn zero_constrained(&mut self, fixed: &[bool]) {
        assert_eq!(self.nrows(), self.ncols());
        assert_eq!(fixed.len(), self.nrows());
        let rp = self.pattern.row_ptr.clone();
        for i in 0..self.nrows() {
            for p in rp[i]..rp[i + 1] {
                if fixed[i] || fixed[self.pattern.col_idx[p]] {
                    self.values[p] = 0.0;
                }
            }
        }
    }

    /// Clears the columns flagged in `fixed` (rectangular coupling blocks).
    pub fn clear_columns(&mut self, fixed: &[bool]) {
        assert_eq!(fixed.len(), self.ncols());
        for (p, &j) in self.pattern.col_idx.iter().enumerate() {
            if fixed[j] {
                self.values[p] = 0.0;
            }
        }
    }

    /// Block-diagonal matrix diag(A, A, ..., A) with `copies` blocks.
    pub fn block_diagonal(&self, copies: usize) -> CsrMatrix {
        let (n, m) = (self.nrows(), self.ncols());
        let mut triplets = Vec::with_capacity(self.nnz() * copies);
        for c in 0..copies {
            for i in 0..n {
                for (j, v) in self.row(i) {
                    triplets.push((c * n + i, c * m + j, v));
                }
            }
        }
        CsrMatrix::from_triplets(n * copies, m * copies, &triplets)
    }

    /// Stacks blocks given as a row-major grid. `None` entries are zero blocks;
    /// every block row and column must have at least one entry to fix its size.
    pub fn from_blocks(blocks: &[Vec<Option<&CsrMatrix>>]) -> CsrMatrix {
        let nbr = blocks.len();
        let nbc = blocks[0].len();
        let mut heights = vec![0usize; nbr];
        let mut widths = vec![0usize; nbc];
        for (bi, row) in blocks.iter().enumerate() {
            assert_eq!(row.len(), nbc, "ragged block grid");
            for (bj, b) in row.iter().enumerate() {
                if let Some(m) = b {
                    heights[bi] = m.nrows();
                    widths[bj] = m.ncols();
                }
            }
        }
        let row_off: Vec<usize> = heights.iter().scan(0, |s, h| { let o = *s; *s += h; Some(o) }).collect();
        let col_off: Vec<usize> = widths.iter().scan(0, |s, w| { let o = *s; *s += w; Some(o) }).collect();
        let mut triplets = Vec::new();
        for (bi, row) in blocks.iter().enumerate() {
            for (bj, b) in row.iter().enumerate() {
                if let Some(m) = b {
                    assert_eq!((m.nrows(), m.ncols()), (heights[bi], widths[bj]), "block size mismatch");
                    for i in 0..m.nrows() {
                        for (j, v) in m.row(i) {
                            triplets.push((row_off[bi] + i, col_off[bj] + j, v));
                        }
                    }
                }
            }
        }
        // keep explicit zero diagonals so later elimination and pivoting see them
        let n = heights.iter().sum::<usize>();
        let m = widths.iter().sum::<usize>();
        for i in 0..n.min(m) {
            triplets.push((i, i, 0.0));
        }
        CsrMatrix::from_triplets(n, m, &triplets)
    }

    /// Dense row-major copy (tests and small oracles).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
