//! Compressed sparse row matrices and the handful of kernels the operator
//! algebra needs: matvec, transpose, sparse-sparse product, diagonal scaling
//! and triplet assembly. Everything is f64 and row-major.

use std::io::Write;

/// Sparse matrix in CSR form. Column indices within a row are strictly
/// increasing and duplicate triplets are summed at assembly time.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    /// Assemble from (row, col, value) triplets; duplicates are summed.
    /// Explicit zeros arising from summation are kept (harmless).
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            per_row[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in &mut per_row {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut it = row.iter().peekable();
            while let Some(&(c, v)) = it.next() {
                let mut acc = v;
                while let Some(&&(c2, v2)) = it.peek() {
                    if c2 != c {
                        break;
                    }
                    acc += v2;
                    it.next();
                }
                indices.push(c);
                data.push(acc);
            }
            indptr.push(indices.len());
        }
        Csr { nrows, ncols, indptr, indices, data }
    }

    /// Identity matrix of size n.
    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Csr::from_triplets(n, n, &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    /// (column indices, values) of row i.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        (&self.indices[lo..hi], &self.data[lo..hi])
    }

    /// Stored value at (i, j); zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                t.push((*c, i, *v));
            }
        }
        Csr::from_triplets(self.ncols, self.nrows, &t)
    }

    /// C = A B (classic row-by-row Gustavson product).
    pub fn matmul(&self, b: &Csr) -> Csr {
        assert_eq!(self.ncols, b.nrows, "matmul dimension mismatch");
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        let mut acc = vec![0.0; b.ncols];
        let mut mark = vec![usize::MAX; b.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            let (acols, avals) = self.row(i);
            for (k, av) in acols.iter().zip(avals) {
                let (bcols, bvals) = b.row(*k);
                for (j, bv) in bcols.iter().zip(bvals) {
                    if mark[*j] != i {
                        mark[*j] = i;
                        acc[*j] = 0.0;
                        touched.push(*j);
                    }
                    acc[*j] += av * bv;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                indices.push(j);
                data.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        Csr { nrows: self.nrows, ncols: b.ncols, indptr, indices, data }
    }

    /// C = A + alpha B.
    pub fn add_scaled(&self, b: &Csr, alpha: f64) -> Csr {
        assert_eq!((self.nrows, self.ncols), (b.nrows, b.ncols));
        let mut t = Vec::with_capacity(self.nnz() + b.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                t.push((i, *c, *v));
            }
            let (cols, vals) = b.row(i);
            for (c, v) in cols.iter().zip(vals) {
                t.push((i, *c, alpha * v));
            }
        }
        Csr::from_triplets(self.nrows, self.ncols, &t)
    }

    /// In-place scale of every stored value.
    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    /// Returns diag(d) * A, i.e. row i scaled by d[i].
    pub fn scale_rows(&self, d: &[f64]) -> Csr {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for i in 0..self.nrows {
            let lo = out.indptr[i];
            let hi = out.indptr[i + 1];
            for v in &mut out.data[lo..hi] {
                *v *= d[i];
            }
        }
        out
    }

    /// Returns A * diag(d), i.e. column j scaled by d[j].
    pub fn scale_cols(&self, d: &[f64]) -> Csr {
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for (k, &j) in out.indices.iter().enumerate() {
            out.data[k] *= d[j];
        }
        out
    }

    /// Largest |a_ij| over stored entries (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                m[(i, *c)] = *v;
            }
        }
        m
    }

    /// Matrix-market coordinate export (1-based indices), for
    /// cross-implementation diffing of assembled operators.
    pub fn write_matrix_market<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.17e}", i + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Elementwise product a ∘ b.
pub fn had(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Elementwise quotient a ⊘ b.
pub fn div(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x / y).collect()
}

/// Dot product aᵀb with a fixed left-to-right summation order, so
/// conservation residuals are bit-reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// a + alpha*b.
pub fn axpy(a: &[f64], b: &[f64], alpha: f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + alpha * y).collect()
}

pub fn scale(a: &[f64], alpha: f64) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Csr {
        // [[1, 0, 2],
        //  [0, 3, 0]]
        Csr::from_triplets(2, 3, &[(0, 2, 2.0), (0, 0, 1.0), (1, 1, 3.0)])
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = Csr::from_triplets(1, 2, &[(0, 1, 1.5), (0, 1, 2.5), (0, 0, -1.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 4.0);
        assert_eq!(a.get(0, 0), -1.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = sample();
        let y = a.matvec(&[1.0, 2.0, 3.0]);
        assert_eq!(y, vec![7.0, 6.0]);
    }

    #[test]
    fn transpose_round_trip() {
        let a = sample();
        assert_eq!(a.transpose().transpose(), a);
        assert_eq!(a.transpose().get(2, 0), 2.0);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = sample();
        let b = Csr::from_triplets(3, 2, &[(0, 0, 1.0), (1, 0, -2.0), (2, 1, 0.5)]);
        let c = a.matmul(&b);
        let dense = a.to_dense() * b.to_dense();
        assert_eq!(c.to_dense(), dense);
    }

    #[test]
    fn diagonal_scalings() {
        let a = sample();
        let r = a.scale_rows(&[2.0, 10.0]);
        assert_eq!(r.get(0, 2), 4.0);
        assert_eq!(r.get(1, 1), 30.0);
        let c = a.scale_cols(&[1.0, -1.0, 3.0]);
        assert_eq!(c.get(0, 2), 6.0);
        assert_eq!(c.get(1, 1), -3.0);
    }

    #[test]
    fn add_scaled_matches_dense() {
        let a = sample();
        let b = Csr::from_triplets(2, 3, &[(0, 1, 1.0), (1, 1, -3.0)]);
        let s = a.add_scaled(&b, 2.0);
        assert_eq!(s.to_dense(), a.to_dense() + 2.0 * b.to_dense());
    }

    #[test]
    fn matrix_market_export() {
        let a = sample();
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket"));
        assert!(text.contains("2 3 3"));
    }
}
