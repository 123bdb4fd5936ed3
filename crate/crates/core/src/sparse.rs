//! Sparse Cholesky factorization for symmetric positive definite matrices.
//!
//! Fill is reduced with a greedy minimum-degree ordering computed on the
//! explicit elimination graph. Network susceptance matrices have a handful of
//! nonzeros per row, so the elimination graph stays small.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("matrix is not positive definite (pivot {pivot} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("index ({0}, {1}) out of range")]
    OutOfRange(usize, usize),
}

/// Accumulates entries of a symmetric matrix. Off-diagonal entries are stored once.
#[derive(Debug, Clone)]
pub struct SymmetricBuilder {
    n: usize,
    diag: Vec<f64>,
    off: BTreeMap<(usize, usize), f64>,
}

impl SymmetricBuilder {
    pub fn new(n: usize) -> Self {
        SymmetricBuilder { n, diag: vec![0.0; n], off: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `value` at `(i, j)` and, for `i != j`, at `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, value: f64) -> Result<(), FactorError> {
        if i >= self.n || j >= self.n {
            return Err(FactorError::OutOfRange(i, j));
        }
        if i == j {
            self.diag[i] += value;
        } else {
            *self.off.entry((i.max(j), i.min(j))).or_insert(0.0) += value;
        }
        Ok(())
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for (&(r, c), &v) in &self.off {
            y[r] += v * x[c];
            y[c] += v * x[r];
        }
        y
    }

    pub fn factor(&self) -> Result<SparseCholesky, FactorError> {
        SparseCholesky::factor(self)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            a[i][i] = self.diag[i];
        }
        for (&(r, c), &v) in &self.off {
            a[r][c] = v;
            a[c][r] = v;
        }
        a
    }
}

/// `P A Pᵀ = L Lᵀ` with `L` stored by columns.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    /// `perm[k]` is the original index eliminated at step `k`.
    perm: Vec<usize>,
    l_diag: Vec<f64>,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    values: Vec<f64>,
}

fn minimum_degree(n: usize, off: &BTreeMap<(usize, usize), f64>) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(r, c) in off.keys() {
        adj[r].insert(c);
        adj[c].insert(r);
    }
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut patterns = vec![Vec::new(); n];
    for _ in 0..n {
        let v = (0..n)
            .filter(|&u| !eliminated[u])
            .min_by_key(|&u| (adj[u].len(), u))
            .expect("uneliminated vertex");
        eliminated[v] = true;
        order.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &a in &nbrs {
            adj[a].remove(&v);
            for &b in &nbrs {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
        patterns[v] = nbrs;
    }
    (order, patterns)
}

impl SparseCholesky {
    pub fn factor(a: &SymmetricBuilder) -> Result<Self, FactorError> {
        let n = a.n;
        let (perm, patterns) = minimum_degree(n, &a.off);
        let mut iperm = vec![0; n];
        for (k, &v) in perm.iter().enumerate() {
            iperm[v] = k;
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut rows = Vec::new();
        col_ptr.push(0);
        for &v in &perm {
            let mut col: Vec<usize> = patterns[v].iter().map(|&u| iperm[u]).collect();
            col.sort_unstable();
            rows.extend(col);
            col_ptr.push(rows.len());
        }
        let mut values = vec![0.0; rows.len()];
        let mut l_diag: Vec<f64> = perm.iter().map(|&v| a.diag[v]).collect();
        let locate = |rows: &[usize], col_ptr: &[usize], col: usize, row: usize| -> usize {
            let span = &rows[col_ptr[col]..col_ptr[col + 1]];
            col_ptr[col] + span.binary_search(&row).expect("row in symbolic pattern")
        };
        for (&(r, c), &v) in &a.off {
            let (nr, nc) = (iperm[r], iperm[c]);
            let (row, col) = if nr > nc { (nr, nc) } else { (nc, nr) };
            values[locate(&rows, &col_ptr, col, row)] += v;
        }

        let scale = a.diag.iter().fold(0.0_f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let pivot = l_diag[k];
            if !(pivot > 1e-12 * scale) {
                return Err(FactorError::NotPositiveDefinite { column: k, pivot });
            }
            let lkk = pivot.sqrt();
            l_diag[k] = lkk;
            let (start, end) = (col_ptr[k], col_ptr[k + 1]);
            for v in &mut values[start..end] {
                *v /= lkk;
            }
            for p in start..end {
                let r1 = rows[p];
                let v1 = values[p];
                l_diag[r1] -= v1 * v1;
                for q in p + 1..end {
                    let r2 = rows[q];
                    let pos = locate(&rows, &col_ptr, r1, r2);
                    values[pos] -= v1 * values[q];
                }
            }
        }
        Ok(SparseCholesky { perm, l_diag, col_ptr, rows, values })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Nonzeros in `L`, diagonal included.
    pub fn nnz(&self) -> usize {
        self.values.len() + self.l_diag.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        let mut w: Vec<f64> = self.perm.iter().map(|&v| b[v]).collect();
        for k in 0..n {
            w[k] /= self.l_diag[k];
            let wk = w[k];
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                w[self.rows[p]] -= self.values[p] * wk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = w[k];
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                acc -= self.values[p] * w[self.rows[p]];
            }
            w[k] = acc / self.l_diag[k];
        }
        for (k, &v) in self.perm.iter().enumerate() {
            b[v] = w[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn grid_laplacian(w: usize, h: usize, shift: f64) -> SymmetricBuilder {
        let n = w * h;
        let mut a = SymmetricBuilder::new(n);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                a.add(i, i, shift).unwrap();
                let mut link = |j: usize, g: f64| {
                    a.add(i, i, g).unwrap();
                    a.add(j, j, g).unwrap();
                    a.add(i, j, -g).unwrap();
                };
                if x + 1 < w {
                    link(i + 1, 1.0 + (i % 3) as f64);
                }
                if y + 1 < h {
                    link(i + w, 2.0 + (i % 5) as f64);
                }
            }
        }
        a
    }

    #[test]
    fn matches_dense_solve() {
        let a = grid_laplacian(7, 6, 0.1);
        let chol = a.factor().unwrap();
        let b: Vec<f64> = (0..a.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = chol.solve(&b);
        let dense = a.to_dense();
        let m = DMatrix::from_fn(a.dim(), a.dim(), |r, c| dense[r][c]);
        let expected = m.lu().solve(&DVector::from_vec(b)).unwrap();
        for (got, want) in x.iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn singular_laplacian_is_rejected() {
        let a = grid_laplacian(3, 3, 0.0);
        assert!(matches!(a.factor(), Err(FactorError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn out_of_range_entry() {
        let mut a = SymmetricBuilder::new(2);
        assert_eq!(a.add(0, 2, 1.0), Err(FactorError::OutOfRange(0, 2)));
    }

    proptest! {
        #[test]
        fn residual_is_small(w in 1usize..8, h in 1usize..8, shift in 0.01f64..2.0, seed in 0u64..1000) {
            let a = grid_laplacian(w, h, shift);
            let chol = a.factor().unwrap();
            let b: Vec<f64> = (0..a.dim()).map(|i| ((i as u64 + seed) as f64 * 0.71).cos()).collect();
            let x = chol.solve(&b);
            let r = a.mul(&x);
            let norm: f64 = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (ri, bi) in r.iter().zip(&b) {
                prop_assert!((ri - bi).abs() <= 1e-9 * norm.max(1.0));
            }
        }
    }
}
