//! Compressed sparse row matrices for transition kernels.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Duplicate columns within
    /// a row are summed; explicit zeros are dropped.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n_rows = rows.len();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                assert!(c < n_cols, "column {c} out of range {n_cols}");
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    /// Row-major dense input.
    pub fn from_dense(n_rows: usize, n_cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), n_rows * n_cols);
        let rows = (0..n_rows)
            .map(|i| {
                data[i * n_cols..(i + 1) * n_cols]
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(n_cols, rows)
    }

    pub fn from_row_vecs(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_dense(rows.len(), n_cols, &flat)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn row_dense(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for (j, v) in self.row(i) {
            out[j] = v;
        }
        out
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    /// `M v` (apply the kernel to a function).
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n_cols);
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, a)| a * v[j]).sum())
            .collect()
    }

    /// `v^T M` (push a distribution forward).
    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n_rows);
        let mut out = vec![0.0; self.n_cols];
        for (i, &w) in v.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (j, a) in self.row(i) {
                out[j] += w * a;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Row-major dense copy.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[i * self.n_cols + j] = v;
            }
        }
        out
    }

    /// Non-zero entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_rows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    /// Convex combination `sum_k w_k M_k` of equally shaped matrices.
    pub fn weighted_sum(mats: &[(&CsrMatrix, f64)]) -> CsrMatrix {
        let (n_rows, n_cols) = mats
            .first()
            .map_or((0, 0), |(m, _)| (m.n_rows, m.n_cols));
        let mut acc = vec![0.0; n_cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut rows = Vec::with_capacity(n_rows);
        for i in 0..n_rows {
            for (m, w) in mats {
                if *w == 0.0 {
                    continue;
                }
                for (j, v) in m.row(i) {
                    if acc[j] == 0.0 {
                        touched.push(j);
                    }
                    acc[j] += w * v;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            let row: Vec<(usize, f64)> = touched.iter().map(|&j| (j, acc[j])).collect();
            for &j in &touched {
                acc[j] = 0.0;
            }
            touched.clear();
            rows.push(row);
        }
        CsrMatrix::from_rows(n_cols, rows)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0 && v.is_finite())
    }

    /// Largest `|row sum - 1|`.
    pub fn max_stochastic_defect(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| (self.row_sum(i) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_dense() {
        let data = [0.5, 0.5, 0.0, 0.1, 0.2, 0.7, 0.0, 0.0, 1.0];
        let m = CsrMatrix::from_dense(3, 3, &data);
        assert_eq!(m.nnz(), 6);
        let d = m.to_dense();
        let v = [1.0, 2.0, 3.0];
        let mv = m.mul_vec(&v);
        let vm = m.vec_mul(&v);
        for i in 0..3 {
            let dm: f64 = (0..3).map(|j| d[(i, j)] * v[j]).sum();
            let dvm: f64 = (0..3).map(|j| v[j] * d[(j, i)]).sum();
            assert!((mv[i] - dm).abs() < 1e-15);
            assert!((vm[i] - dvm).abs() < 1e-15);
        }
        assert_eq!(m.to_row_major(), data.to_vec());
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_rows(2, vec![vec![(1, 0.25), (0, 0.5), (1, 0.25)]]);
        assert_eq!(m.row_dense(0), vec![0.5, 0.5]);
    }

    #[test]
    fn weighted_sum_is_elementwise() {
        let a = CsrMatrix::from_dense(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let b = CsrMatrix::from_dense(2, 2, &[0.0, 1.0, 0.5, 0.5]);
        let c = CsrMatrix::weighted_sum(&[(&a, 0.5), (&b, 0.5)]);
        assert_eq!(c.to_row_major(), vec![0.5, 0.5, 0.5, 0.5]);
    }
}
