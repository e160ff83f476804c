//! Dense row-major and compressed-sparse-row matrices.

use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};

/// Row-major dense matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(AtlasError::DimensionMismatch {
                expected: n_rows * n_cols,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AtlasError::invalid("matrix contains non-finite values"));
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(AtlasError::DimensionMismatch {
                    expected: n_cols,
                    actual: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), n_cols, values)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n_cols + j] = v;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Per-column population variance (divides by n).
    pub fn column_variances(&self) -> Vec<f64> {
        let n = self.n_rows as f64;
        let mut mean = vec![0.0; self.n_cols];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.n_cols];
        for row in self.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n);
        var
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A borrowed sparse row: sorted column indices with matching values.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl SparseRow<'_> {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Merge-join dot product of two sorted sparse rows.
    pub fn dot(&self, other: &SparseRow<'_>) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&j, v)| v * dense[j])
            .sum()
    }
}

/// Document-term matrix in compressed-row layout. Values are non-negative
/// and column indices are strictly increasing within each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDocTermMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseDocTermMatrix {
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(AtlasError::DimensionMismatch {
                expected: n_rows + 1,
                actual: row_offsets.len(),
            });
        }
        if col_indices.len() != values.len() || row_offsets[n_rows] != values.len() {
            return Err(AtlasError::invalid("CSR arrays have inconsistent lengths"));
        }
        if row_offsets.first() != Some(&0) || row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(AtlasError::invalid("CSR row offsets must start at 0 and be non-decreasing"));
        }
        for i in 0..n_rows {
            let cols = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(AtlasError::invalid(format!(
                    "row {i}: column indices are not strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c >= n_cols) {
                return Err(AtlasError::invalid(format!("row {i}: column index out of range")));
            }
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(AtlasError::invalid("CSR values must be finite and non-negative"));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Build from per-row `(column, value)` lists; each list must already be
    /// sorted by column with no repeats.
    pub fn from_sorted_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n_rows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_offsets.push(0);
        for row in rows {
            for (c, v) in row {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_csr(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn from_dense(dense: &DenseMatrix) -> Result<Self> {
        let rows = dense
            .rows()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::from_sorted_rows(dense.n_cols(), rows)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        SparseRow {
            indices: &self.col_indices[span.clone()],
            values: &self.values[span],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = self.row(i);
        row.indices
            .binary_search(&j)
            .map_or(0.0, |pos| row.values[pos])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let row = self.row(i);
            for (&j, &v) in row.indices.iter().zip(row.values) {
                out.set(i, j, v);
            }
        }
        out
    }
}

/// Row access shared by dense and sparse matrices, enough for the
/// products PCA and t-SNE need without densifying sparse input.
pub trait RowMatrix: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// `row_i . v` for a dense `v` of length `n_cols`.
    fn row_dot(&self, i: usize, v: &[f64]) -> f64;
    /// `row_i . row_j`.
    fn row_pair_dot(&self, i: usize, j: usize) -> f64;
    /// Call `f(col, value)` for every stored entry of row `i`.
    fn for_each_in_row(&self, i: usize, f: impl FnMut(usize, f64));

    fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_cols()];
        for i in 0..self.n_rows() {
            self.for_each_in_row(i, |j, v| mean[j] += v);
        }
        let n = self.n_rows() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    fn row_squared_norm(&self, i: usize) -> f64 {
        self.row_pair_dot(i, i)
    }

    /// Squared Euclidean distance between two rows.
    fn row_squared_distance(&self, i: usize, j: usize) -> f64 {
        self.row_squared_distance_with_norms(i, j, self.row_squared_norm(i), self.row_squared_norm(j))
    }

    /// Squared distance given precomputed squared row norms.
    fn row_squared_distance_with_norms(&self, i: usize, j: usize, norm_i: f64, norm_j: f64) -> f64 {
        (norm_i + norm_j - 2.0 * self.row_pair_dot(i, j)).max(0.0)
    }
}

impl RowMatrix for DenseMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        dot(self.row(i), v)
    }

    fn row_pair_dot(&self, i: usize, j: usize) -> f64 {
        dot(self.row(i), self.row(j))
    }

    fn for_each_in_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        for (j, &v) in self.row(i).iter().enumerate() {
            f(j, v);
        }
    }

    fn row_squared_distance(&self, i: usize, j: usize) -> f64 {
        squared_distance(self.row(i), self.row(j))
    }

    fn row_squared_distance_with_norms(&self, i: usize, j: usize, _: f64, _: f64) -> f64 {
        squared_distance(self.row(i), self.row(j))
    }
}

impl RowMatrix for SparseDocTermMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).dot_dense(v)
    }

    fn row_pair_dot(&self, i: usize, j: usize) -> f64 {
        self.row(i).dot(&self.row(j))
    }

    fn for_each_in_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        let row = self.row(i);
        for (&j, &v) in row.indices.iter().zip(row.values) {
            f(j, v);
        }
    }
}
