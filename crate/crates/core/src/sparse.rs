//! Compressed sparse row storage and a factor-once sparse Cholesky solver.

use crate::error::{check_len, Error, Result};

/// Square sparse matrix in CSR layout with sorted, duplicate-free rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; dim + 1];
        for &(r, c, _) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) out of range");
            counts[r + 1] += 1;
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let p = next[r];
            cols[p] = c;
            vals[p] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..dim {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|p| (cols[p], vals[p])));
            row.sort_by_key(|e| e.0);
            for &(c, v) in &row {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![1.0; dim],
        }
    }

    /// Row-major dense input; explicit zeros are dropped.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let triplets: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| {
                assert_eq!(r.len(), dim, "dense input must be square");
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(j, &v)| (i, j, v))
            })
            .collect();
        Self::from_triplets(dim, &triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(p) => self.values[range.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.dim]; self.dim];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.dim];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    /// `y = A x`, overwriting `y`.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_len(self.dim, x.len())?;
        check_len(self.dim, y.len())?;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *yi = acc;
        }
        Ok(())
    }

    /// `y += alpha * A x`.
    pub fn spmv_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_len(self.dim, x.len())?;
        check_len(self.dim, y.len())?;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *yi += alpha * acc;
        }
        Ok(())
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len(self.dim, x.len())?;
        check_len(self.dim, y.len())?;
        let mut total = 0.0;
        for (i, xi) in x.iter().enumerate() {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * y[self.col_idx[p]];
            }
            total += xi * acc;
        }
        Ok(total)
    }

    /// `alpha * self + beta * other`, merging sparsity patterns.
    pub fn linear_combination(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<Self> {
        check_len(self.dim, other.dim)?;
        let mut row_ptr = Vec::with_capacity(self.dim + 1);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        row_ptr.push(0);
        for i in 0..self.dim {
            let (mut p, pe) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let (mut q, qe) = (other.row_ptr[i], other.row_ptr[i + 1]);
            while p < pe || q < qe {
                let cp = if p < pe { self.col_idx[p] } else { usize::MAX };
                let cq = if q < qe { other.col_idx[q] } else { usize::MAX };
                if cp == cq {
                    col_idx.push(cp);
                    values.push(alpha * self.values[p] + beta * other.values[q]);
                    p += 1;
                    q += 1;
                } else if cp < cq {
                    col_idx.push(cp);
                    values.push(alpha * self.values[p]);
                    p += 1;
                } else {
                    col_idx.push(cq);
                    values.push(beta * other.values[q]);
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            dim: self.dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Zeroes rows and columns flagged in `mask` and puts 1 on their diagonal.
    pub fn eliminate(&self, mask: &[bool]) -> Result<Self> {
        check_len(self.dim, mask.len())?;
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.dim {
            if mask[i] {
                triplets.push((i, i, 1.0));
                continue;
            }
            for (j, v) in self.row(i) {
                if !mask[j] {
                    triplets.push((i, j, v));
                }
            }
        }
        Ok(Self::from_triplets(self.dim, &triplets))
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn has_sorted_rows(&self) -> bool {
        (0..self.dim).all(|i| {
            self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
                .windows(2)
                .all(|w| w[0] < w[1])
        })
    }
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite matrix.
///
/// `L` is stored column-wise with the diagonal entry first in each column.
/// The factor is immutable; every solve works on caller-owned buffers, so
/// one factor can serve any number of threads.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

const NONE: usize = usize::MAX;

/// Elimination tree of the lower triangle of `a`.
fn etree(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim;
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for (mut i, _) in a.row(k) {
            if i >= k {
                continue;
            }
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Pattern of row `k` of `L` in topological order, written to `stack[top..]`.
fn ereach(
    a: &CsrMatrix,
    k: usize,
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = a.dim;
    let mut top = n;
    mark[k] = k;
    for (mut i, _) in a.row(k) {
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

/// Up-looking sparse Cholesky in the natural ordering. Only the lower
/// triangle of `a` is read.
pub fn factorize_spd(a: &CsrMatrix) -> Result<SpdFactor> {
    let n = a.dim;
    let parent = etree(a);
    let mut stack = vec![0usize; n];
    let mut mark = vec![NONE; n];

    // column counts of L from the row patterns
    let mut counts = vec![1usize; n];
    for k in 0..n {
        let top = ereach(a, k, &parent, &mut stack, &mut mark);
        for &j in &stack[top..n] {
            counts[j] += 1;
        }
    }
    let mut col_ptr = vec![0usize; n + 1];
    for j in 0..n {
        col_ptr[j + 1] = col_ptr[j] + counts[j];
    }
    let nnz = col_ptr[n];
    let mut row_idx = vec![0usize; nnz];
    let mut values = vec![0.0; nnz];
    let mut fill: Vec<usize> = col_ptr[..n].to_vec();
    let mut x = vec![0.0; n];
    mark.iter_mut().for_each(|m| *m = NONE);

    for k in 0..n {
        let top = ereach(a, k, &parent, &mut stack, &mut mark);
        for (j, v) in a.row(k) {
            if j <= k {
                x[j] += v;
            }
        }
        let mut d = x[k];
        x[k] = 0.0;
        for &i in &stack[top..n] {
            let lki = x[i] / values[col_ptr[i]];
            x[i] = 0.0;
            for p in col_ptr[i] + 1..fill[i] {
                x[row_idx[p]] -= values[p] * lki;
            }
            d -= lki * lki;
            let p = fill[i];
            fill[i] += 1;
            row_idx[p] = k;
            values[p] = lki;
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { row: k, pivot: d });
        }
        let p = fill[k];
        fill[k] += 1;
        row_idx[p] = k;
        values[p] = d.sqrt();
    }
    Ok(SpdFactor {
        dim: n,
        col_ptr,
        row_idx,
        values,
    })
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored entries of `L`.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    /// Overwrites `x` (holding the right-hand side) with the solution.
    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        check_len(self.dim, x.len())?;
        let (cp, ri, lv) = (&self.col_ptr, &self.row_idx, &self.values);
        for j in 0..self.dim {
            let xj = x[j] / lv[cp[j]];
            x[j] = xj;
            if xj != 0.0 {
                for p in cp[j] + 1..cp[j + 1] {
                    x[ri[p]] -= lv[p] * xj;
                }
            }
        }
        for j in (0..self.dim).rev() {
            let mut acc = x[j];
            for p in cp[j] + 1..cp[j + 1] {
                acc -= lv[p] * x[ri[p]];
            }
            x[j] = acc / lv[cp[j]];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting, independent of the
    /// sparse factorization.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap();
            a.swap(k, piv);
            b.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    fn random_spd(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let s: f64 = (0..n).map(|k| b[i][k] * b[j][k]).sum();
                        s + if i == j { n as f64 } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identity_spmv_and_solve() {
        let a = CsrMatrix::identity(4);
        let x = vec![1.0, -2.0, 3.5, 0.25];
        assert_eq!(a.spmv(&x).unwrap(), x);
        let f = factorize_spd(&a).unwrap();
        assert_eq!(f.solve(&x).unwrap(), x);
    }

    #[test]
    fn two_by_two() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert_eq!(a.spmv(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
        let x = factorize_spd(&a).unwrap().solve(&[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = CsrMatrix::from_dense(&random_spd(6, 3));
        let x = factorize_spd(&a).unwrap().solve(&[0.0; 6]).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matches_dense_elimination() {
        let dense = random_spd(5, 42);
        let a = CsrMatrix::from_dense(&dense);
        let b = vec![1.0, -0.5, 2.0, 0.0, 3.0];
        let x = factorize_spd(&a).unwrap().solve(&b).unwrap();
        let reference = dense_solve(dense, b);
        for (u, v) in x.iter().zip(&reference) {
            assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            factorize_spd(&a),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let a = CsrMatrix::identity(3);
        assert!(a.spmv(&[1.0, 2.0]).is_err());
        assert!(factorize_spd(&a).unwrap().solve(&[1.0]).is_err());
    }

    #[test]
    fn triplets_are_merged_and_sorted() {
        let a = CsrMatrix::from_triplets(2, &[(0, 1, 1.0), (0, 0, 2.0), (0, 1, 0.5), (1, 1, 4.0)]);
        assert!(a.has_sorted_rows());
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 1), 1.5);
    }

    #[test]
    fn sparse_banded_matches_dense() {
        // 1D Laplacian plus shift, with fill-in free structure and a dense oracle
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
            if i + 7 < n {
                t.push((i, i + 7, -0.3));
                t.push((i + 7, i, -0.3));
            }
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = factorize_spd(&a).unwrap().solve(&b).unwrap();
        let reference = dense_solve(a.to_dense(), b);
        for (u, v) in x.iter().zip(&reference) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn spmv_is_linear(seed in 0u64..1000, alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
                let a = CsrMatrix::from_dense(&random_spd(7, seed));
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
                let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
                let lhs = a.spmv(&z).unwrap();
                let ax = a.spmv(&x).unwrap();
                let ay = a.spmv(&y).unwrap();
                for i in 0..7 {
                    let rhs = alpha * ax[i] + beta * ay[i];
                    prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
                }
            }

            #[test]
            fn solve_inverts_spmv(seed in 0u64..1000) {
                let a = CsrMatrix::from_dense(&random_spd(9, seed));
                let f = factorize_spd(&a).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let back = f.solve(&a.spmv(&x).unwrap()).unwrap();
                let err: f64 = x.iter().zip(&back).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
                let nrm: f64 = x.iter().map(|u| u * u).sum::<f64>().sqrt();
                prop_assert!(err <= 1e-10 * nrm);
            }
        }
    }
}
