//! Principal component analysis keeping just enough components to reach a
//! variance target.
//!
//! The data is never centered in memory: the scatter matrix is formed from
//! uncentered products and a rank-one mean correction, on whichever side
//! (features x features or samples x samples) is smaller. Sparse tf-idf input
//! therefore stays sparse.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};
use crate::linalg::symmetric_eigen;
use crate::matrix::{dot, DenseMatrix, RowMatrix};

pub const DEFAULT_VARIANCE_TARGET: f64 = 0.95;

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    /// Smallest d whose cumulative explained-variance ratio reaches the fraction.
    Variance(f64),
    /// A fixed number of components (capped at the rank).
    Components(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// d rows of length V, pairwise orthonormal.
    pub components: DenseMatrix,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub total_variance: f64,
    pub n_samples: usize,
    pub target: PcaTarget,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn cumulative_ratio(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }
}

// Scatter matrix Xcᵀ·Xc (features side).
fn feature_scatter<M: RowMatrix>(x: &M, mean: &[f64]) -> Vec<f64> {
    let v = x.n_cols();
    let n = x.n_rows();
    let mut s = vec![0.0; v * v];
    let mut entries = Vec::new();
    for i in 0..n {
        entries.clear();
        x.for_each_in_row(i, |j, val| {
            if val != 0.0 {
                entries.push((j, val));
            }
        });
        for &(a, va) in &entries {
            let row = &mut s[a * v..(a + 1) * v];
            for &(b, vb) in &entries {
                row[b] += va * vb;
            }
        }
    }
    let nf = n as f64;
    for a in 0..v {
        for b in 0..v {
            s[a * v + b] -= nf * mean[a] * mean[b];
        }
    }
    s
}

// Scatter matrix Xc·Xcᵀ (samples side).
fn sample_scatter<M: RowMatrix>(x: &M, mean: &[f64]) -> Vec<f64> {
    let n = x.n_rows();
    let proj: Vec<f64> = (0..n).into_par_iter().map(|i| x.row_dot(i, mean)).collect();
    let mm = dot(mean, mean);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..=i)
                .map(|j| x.row_pair_dot(i, j) - proj[i] - proj[j] + mm)
                .collect()
        })
        .collect();
    let mut k = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (j, &val) in row.iter().enumerate() {
            k[i * n + j] = val;
            k[j * n + i] = val;
        }
    }
    k
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = j;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

// Two passes of modified Gram-Schmidt; directions from the sample side lose
// orthogonality in proportion to 1/s_k².
fn orthonormalize(vectors: &mut [Vec<f64>]) {
    for _ in 0..2 {
        for k in 0..vectors.len() {
            let (done, rest) = vectors.split_at_mut(k);
            let v = &mut rest[0];
            for u in done.iter() {
                let p = dot(u, v);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
            let norm = dot(v, v).sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
        }
    }
}

pub fn fit_pca<M: RowMatrix>(x: &M, target: PcaTarget) -> Result<PcaModel> {
    let n = x.n_rows();
    let v = x.n_cols();
    if n < 2 {
        return Err(AtlasError::invalid("PCA needs at least 2 rows"));
    }
    match target {
        PcaTarget::Variance(t) if !(t > 0.0 && t <= 1.0) => {
            return Err(AtlasError::invalid(format!(
                "variance target must be in (0, 1], got {t}"
            )))
        }
        PcaTarget::Components(0) => {
            return Err(AtlasError::invalid("component count must be at least 1"))
        }
        _ => {}
    }

    let mean = x.column_means();
    let feature_side = v <= n;
    let side = if feature_side { v } else { n };
    let scatter = if feature_side {
        feature_scatter(x, &mean)
    } else {
        sample_scatter(x, &mean)
    };
    let eig = symmetric_eigen(&scatter, side);

    let lambda_max = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = lambda_max * side as f64 * f64::EPSILON * 16.0;
    let rank = eig.values.iter().take_while(|&&l| l > tol && l > 0.0).count();
    if rank == 0 {
        return Err(AtlasError::ZeroVariance);
    }
    let total: f64 = eig.values[..rank].iter().sum();
    let ratios: Vec<f64> = eig.values[..rank].iter().map(|l| l / total).collect();

    let d = match target {
        PcaTarget::Variance(t) if t >= 1.0 => rank,
        PcaTarget::Variance(t) => {
            let mut cum = 0.0;
            ratios
                .iter()
                .position(|r| {
                    cum += r;
                    cum >= t
                })
                .map_or(rank, |p| p + 1)
        }
        PcaTarget::Components(c) => c.min(rank),
    };

    let mut axes: Vec<Vec<f64>> = if feature_side {
        eig.vectors[..d].to_vec()
    } else {
        // v_k = Xcᵀ u_k / s_k
        eig.vectors[..d]
            .par_iter()
            .zip(&eig.values[..d])
            .map(|(u, &lambda)| {
                let s = lambda.sqrt();
                let mut axis = vec![0.0; v];
                for (i, &ui) in u.iter().enumerate() {
                    x.for_each_in_row(i, |j, val| axis[j] += ui * val);
                }
                let usum: f64 = u.iter().sum();
                axis.iter_mut()
                    .zip(&mean)
                    .for_each(|(a, m)| *a = (*a - m * usum) / s);
                axis
            })
            .collect()
    };
    if !feature_side {
        orthonormalize(&mut axes);
    }
    axes.iter_mut().for_each(|a| fix_sign(a));

    let denom = (n - 1) as f64;
    let components = DenseMatrix::from_vec(d, v, axes.concat())?;
    Ok(PcaModel {
        mean,
        components,
        explained_variance: eig.values[..d].iter().map(|l| l / denom).collect(),
        explained_variance_ratio: ratios[..d].to_vec(),
        total_variance: total / denom,
        n_samples: n,
        target,
    })
}

/// Project rows onto the principal axes: `(X - mean) · componentsᵀ`.
pub fn transform<M: RowMatrix>(x: &M, model: &PcaModel) -> Result<DenseMatrix> {
    if x.n_cols() != model.n_features() {
        return Err(AtlasError::DimensionMismatch {
            expected: model.n_features(),
            actual: x.n_cols(),
        });
    }
    let d = model.n_components();
    let offsets: Vec<f64> = model.components.rows().map(|c| dot(c, &model.mean)).collect();
    let values: Vec<f64> = (0..x.n_rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let offsets = &offsets;
            model
                .components
                .rows()
                .enumerate()
                .map(move |(k, c)| x.row_dot(i, c) - offsets[k])
        })
        .collect();
    DenseMatrix::from_vec(x.n_rows(), d, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SparseDocTermMatrix;

    fn line() -> DenseMatrix {
        DenseMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]).unwrap()
    }

    #[test]
    fn points_on_a_line() {
        let model = fit_pca(&line(), PcaTarget::Variance(0.95)).unwrap();
        assert_eq!(model.n_components(), 1);
        assert_eq!(model.explained_variance_ratio, vec![1.0]);
        assert_eq!(model.components.row(0), &[1.0, 0.0]);
        // sample variance of 0,1,2,3
        assert!((model.explained_variance[0] - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn line_projection_is_centered_coordinate() {
        let model = fit_pca(&line(), PcaTarget::Variance(0.95)).unwrap();
        let y = transform(&line(), &model).unwrap();
        for (got, want) in y.as_slice().iter().zip([-1.5, -0.5, 0.5, 1.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_row_maps_to_origin() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0], [3.0, -1.0, 4.0], [0.0, 0.5, 2.0]]).unwrap();
        let model = fit_pca(&x, PcaTarget::Variance(1.0)).unwrap();
        let m = DenseMatrix::from_rows(std::slice::from_ref(&model.mean)).unwrap();
        let y = transform(&m, &model).unwrap();
        assert!(y.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn identical_rows_have_zero_variance() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(
            fit_pca(&x, PcaTarget::Variance(0.95)),
            Err(AtlasError::ZeroVariance)
        ));
    }

    #[test]
    fn rejects_bad_arguments() {
        let one = DenseMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(fit_pca(&one, PcaTarget::Variance(0.95)).is_err());
        assert!(fit_pca(&line(), PcaTarget::Variance(0.0)).is_err());
        assert!(fit_pca(&line(), PcaTarget::Variance(1.5)).is_err());
        let model = fit_pca(&line(), PcaTarget::Variance(0.95)).unwrap();
        let wide = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            transform(&wide, &model),
            Err(AtlasError::DimensionMismatch { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn full_target_keeps_rank() {
        // rank 2 in 4 dimensions
        let x = DenseMatrix::from_rows(&[
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [2.0, 1.0, 2.0, 1.0],
            [0.0, 0.0, 0.0, 0.0],
            [3.0, 3.0, 3.0, 3.0],
        ])
        .unwrap();
        let model = fit_pca(&x, PcaTarget::Variance(1.0)).unwrap();
        assert_eq!(model.n_components(), 2);
        assert!((model.cumulative_ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_and_dense_inputs_agree_on_both_sides() {
        // 6 x 4 (feature side) and its 3-row prefix (sample side)
        let x = DenseMatrix::from_rows(&[
            [0.5, 0.0, 0.1, 0.9],
            [0.0, 0.7, 0.3, 0.0],
            [0.2, 0.2, 0.0, 0.4],
            [0.9, 0.0, 0.0, 0.1],
            [0.0, 0.3, 0.8, 0.0],
            [0.1, 0.6, 0.2, 0.3],
        ])
        .unwrap();
        let s = SparseDocTermMatrix::from_dense(&x).unwrap();
        let a = fit_pca(&x, PcaTarget::Variance(1.0)).unwrap();
        let b = fit_pca(&s, PcaTarget::Variance(1.0)).unwrap();
        for (p, q) in a.explained_variance.iter().zip(&b.explained_variance) {
            assert!((p - q).abs() < 1e-12);
        }
        for (p, q) in a.components.as_slice().iter().zip(b.components.as_slice()) {
            assert!((p - q).abs() < 1e-10);
        }

        let head = DenseMatrix::from_rows(&x.to_rows()[..3]).unwrap();
        let model = fit_pca(&head, PcaTarget::Variance(1.0)).unwrap();
        let y = transform(&head, &model).unwrap();
        for (var, ev) in y.column_variances().iter().zip(&model.explained_variance) {
            // population -> sample variance
            assert!((var * 3.0 / 2.0 - ev).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let x = DenseMatrix::from_rows(&[[0.0, 0.0], [0.0, -1.0], [0.0, -2.0], [0.1, -3.0]]).unwrap();
        let model = fit_pca(&x, PcaTarget::Components(1)).unwrap();
        let c = model.components.row(0);
        assert!(c[1] > 0.0);
    }
}
