//! t-SNE: perplexity-calibrated Gaussian affinities in the input space,
//! Student-t affinities in the plane, and gradient descent on KL(P || Q) with
//! an optional Barnes-Hut estimate of the repulsive forces.

mod quadtree;
mod vptree;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};
use crate::matrix::{DenseMatrix, RowMatrix};
use crate::pca::{fit_pca, transform, PcaTarget};

pub use quadtree::QuadTree;
pub use vptree::VpTree;

/// Entropy bisection stops once |H - log2(perplexity)| falls below this (bits)
/// and `2^H` is within [`PERPLEXITY_TOLERANCE`] of the target.
pub const ENTROPY_TOLERANCE: f64 = 1e-5;
/// At large perplexities a 1e-5 bit error is several 1e-4 in `2^H`.
pub const PERPLEXITY_TOLERANCE: f64 = 1e-5;
pub const MAX_BISECTION_STEPS: usize = 100;
pub const KL_SAMPLE_EVERY: usize = 50;
/// Neighbor search switches from a linear scan to a vantage-point tree here.
pub const VP_TREE_MIN_POINTS: usize = 2048;
/// Dimensionality used when `pre_reduce` is on.
pub const PRE_REDUCE_COMPONENTS: usize = 50;
const INIT_STD: f64 = 1e-4;
const DUPLICATE_JITTER: f64 = 1e-6;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TsneInit {
    #[default]
    #[serde(rename = "gaussian-1e-4")]
    Gaussian,
    /// First two principal axes, rescaled to the Gaussian init's spread.
    #[serde(rename = "pca-2d")]
    Pca2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    /// Barnes-Hut accuracy; 0 means exact gradients over all pairs.
    pub theta: f64,
    pub seed: u64,
    pub init: TsneInit,
    /// Run on a 50-component PCA projection instead of the raw rows.
    pub pre_reduce: bool,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            n_iter: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            theta: 0.5,
            seed: 0,
            init: TsneInit::Gaussian,
            pre_reduce: false,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(AtlasError::invalid(format!("t-SNE {what}")));
        if !(self.perplexity.is_finite() && self.perplexity > 0.0) {
            return bad("perplexity must be positive");
        }
        if self.n_iter == 0 {
            return bad("n_iter must be at least 1");
        }
        if !(self.early_exaggeration.is_finite() && self.early_exaggeration >= 1.0) {
            return bad("early_exaggeration must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        for m in [self.initial_momentum, self.final_momentum] {
            if !(0.0..1.0).contains(&m) {
                return bad("momentum must lie in [0, 1)");
            }
        }
        if !(0.0..1.0).contains(&self.theta) {
            return bad("theta must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Largest perplexity strictly below which `n` points are feasible.
pub fn perplexity_bound(n: usize) -> f64 {
    (n as f64 - 1.0) / 3.0
}

/// Symmetric joint probabilities in compressed-row form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    n: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl AffinityMatrix {
    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Result of one perplexity calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct RowCalibration {
    pub probabilities: Vec<f64>,
    /// Precision `1 / (2 sigma^2)`.
    pub beta: f64,
    pub entropy_bits: f64,
}

fn row_distribution(sq_dists: &[f64], d_min: f64, beta: f64) -> (Vec<f64>, f64) {
    let mut p: Vec<f64> = sq_dists.iter().map(|d| (-(d - d_min) * beta).exp()).collect();
    let sum: f64 = p.iter().sum();
    let weighted: f64 = p.iter().zip(sq_dists).map(|(w, d)| w * (d - d_min)).sum();
    let entropy_nats = sum.ln() + beta * weighted / sum;
    p.iter_mut().for_each(|w| *w /= sum);
    (p, entropy_nats / std::f64::consts::LN_2)
}

/// Find the precision whose Gaussian conditional over `sq_dists` has
/// perplexity `2^H` equal to `perplexity`, by bisection on the entropy.
pub fn calibrate_row(sq_dists: &[f64], perplexity: f64) -> RowCalibration {
    if sq_dists.is_empty() {
        return RowCalibration {
            probabilities: Vec::new(),
            beta: 1.0,
            entropy_bits: 0.0,
        };
    }
    // shifting by the minimum leaves p unchanged and avoids underflow
    let d_min = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let target = perplexity.log2();
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut beta = 1.0;
    let (mut p, mut h) = row_distribution(sq_dists, d_min, beta);
    for _ in 0..MAX_BISECTION_STEPS {
        let diff = h - target;
        if diff.abs() < ENTROPY_TOLERANCE && (h.exp2() - perplexity).abs() < PERPLEXITY_TOLERANCE {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        (p, h) = row_distribution(sq_dists, d_min, beta);
    }
    RowCalibration {
        probabilities: p,
        beta,
        entropy_bits: h,
    }
}

/// Calibrated conditionals `p_{j|i}`, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditionals {
    pub neighbors: Vec<Vec<usize>>,
    pub probabilities: Vec<Vec<f64>>,
    pub entropy_bits: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Conditionals {
    pub fn n_points(&self) -> usize {
        self.neighbors.len()
    }

    /// `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
    pub fn symmetrize(&self) -> AffinityMatrix {
        let n = self.n_points();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for (&j, &p) in self.neighbors[i].iter().zip(&self.probabilities[i]) {
                rows[i].push((j, p));
                rows[j].push((i, p));
            }
        }
        let scale = 2.0 * n as f64;
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for mut row in rows {
            // stable: both halves of a pair are added in the same order in
            // row i and row j, so p_ij and p_ji are bit-identical
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == col {
                    v += row[k].1;
                    k += 1;
                }
                indices.push(col);
                values.push(v / scale);
            }
            offsets.push(indices.len());
        }
        AffinityMatrix {
            n,
            offsets,
            indices,
            values,
        }
    }
}

fn squared_norms<M: RowMatrix>(x: &M) -> Vec<f64> {
    (0..x.n_rows()).into_par_iter().map(|i| x.row_squared_norm(i)).collect()
}

/// For each row, its `k` nearest other rows as `(index, squared distance)`,
/// ordered by distance then index.
pub fn nearest_neighbors<M: RowMatrix>(x: &M, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = x.n_rows();
    let k = k.min(n.saturating_sub(1));
    let norms = squared_norms(x);
    let sq = |i: usize, j: usize| x.row_squared_distance_with_norms(i, j, norms[i], norms[j]);
    if n >= VP_TREE_MIN_POINTS {
        let dist = |i: usize, j: usize| sq(i, j).sqrt();
        let tree = VpTree::build(n, &dist);
        return (0..n)
            .into_par_iter()
            .map(|i| {
                tree.nearest(i, k, &|j| dist(i, j))
                    .into_iter()
                    .map(|(j, _)| (j, sq(i, j)))
                    .collect()
            })
            .collect();
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut all: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, sq(i, j))).collect();
            let by_dist = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
            if k < all.len() {
                all.select_nth_unstable_by(k, by_dist);
                all.truncate(k);
            }
            all.sort_by(by_dist);
            all
        })
        .collect()
}

/// Per-point Gaussian conditionals calibrated to `perplexity`. With
/// `theta > 0` each row is supported on the `floor(3 * perplexity)` nearest
/// neighbors; with `theta == 0` on every other point.
pub fn conditional_affinities<M: RowMatrix>(x: &M, perplexity: f64, theta: f64) -> Result<Conditionals> {
    let n = x.n_rows();
    if n < 4 {
        return Err(AtlasError::invalid(format!("t-SNE needs at least 4 distinct points, got {n}")));
    }
    if !(perplexity > 0.0 && perplexity < perplexity_bound(n)) {
        return Err(AtlasError::invalid(format!(
            "perplexity {perplexity} is infeasible for {n} points (must be below {:.3})",
            perplexity_bound(n)
        )));
    }
    let rows: Vec<Vec<(usize, f64)>> = if theta > 0.0 {
        nearest_neighbors(x, (3.0 * perplexity).floor() as usize)
    } else {
        let norms = squared_norms(x);
        (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (j, x.row_squared_distance_with_norms(i, j, norms[i], norms[j])))
                    .collect()
            })
            .collect()
    };
    let calibrated: Vec<(Vec<usize>, RowCalibration)> = rows
        .into_par_iter()
        .map(|row| {
            let (idx, d): (Vec<usize>, Vec<f64>) = row.into_iter().unzip();
            (idx, calibrate_row(&d, perplexity))
        })
        .collect();
    let mut out = Conditionals {
        neighbors: Vec::with_capacity(n),
        probabilities: Vec::with_capacity(n),
        entropy_bits: Vec::with_capacity(n),
        betas: Vec::with_capacity(n),
    };
    for (idx, cal) in calibrated {
        out.neighbors.push(idx);
        out.probabilities.push(cal.probabilities);
        out.entropy_bits.push(cal.entropy_bits);
        out.betas.push(cal.beta);
    }
    Ok(out)
}

/// Joint affinities: calibrated conditionals, symmetrized.
pub fn joint_affinities<M: RowMatrix>(x: &M, perplexity: f64, theta: f64) -> Result<AffinityMatrix> {
    Ok(conditional_affinities(x, perplexity, theta)?.symmetrize())
}

fn student_t(a: [f64; 2], b: [f64; 2]) -> (f64, [f64; 2]) {
    let d = [a[0] - b[0], a[1] - b[1]];
    (1.0 / (1.0 + d[0] * d[0] + d[1] * d[1]), d)
}

fn attraction(p: &AffinityMatrix, y: &[[f64; 2]], i: usize) -> [f64; 2] {
    let (cols, vals) = p.row(i);
    let mut f = [0.0; 2];
    for (&j, &pij) in cols.iter().zip(vals) {
        let (w, d) = student_t(y[i], y[j]);
        f[0] += pij * w * d[0];
        f[1] += pij * w * d[1];
    }
    f
}

fn exact_repulsion(y: &[[f64; 2]], i: usize) -> (f64, [f64; 2]) {
    let mut z = 0.0;
    let mut f = [0.0; 2];
    for (j, &yj) in y.iter().enumerate() {
        if j != i {
            let (w, d) = student_t(y[i], yj);
            z += w;
            f[0] += w * w * d[0];
            f[1] += w * w * d[1];
        }
    }
    (z, f)
}

fn repulsions(y: &[[f64; 2]], theta: f64) -> Vec<(f64, [f64; 2])> {
    if theta > 0.0 {
        let tree = QuadTree::build(y);
        (0..y.len()).into_par_iter().map(|i| tree.repulsion(i, theta)).collect()
    } else {
        (0..y.len()).into_par_iter().map(|i| exact_repulsion(y, i)).collect()
    }
}

/// Gradient of KL(exaggeration * P || Q) and the normalizer
/// `Z = sum_{i != j} (1 + |y_i - y_j|^2)^-1` (Barnes-Hut estimates when
/// `theta > 0`).
pub fn gradient(p: &AffinityMatrix, y: &[[f64; 2]], theta: f64, exaggeration: f64) -> (Vec<[f64; 2]>, f64) {
    let rep = repulsions(y, theta);
    let z: f64 = rep.iter().map(|r| r.0).sum();
    let grad = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let a = attraction(p, y, i);
            let r = rep[i].1;
            [
                4.0 * (exaggeration * a[0] - r[0] / z),
                4.0 * (exaggeration * a[1] - r[1] / z),
            ]
        })
        .collect();
    (grad, z)
}

pub fn exact_gradient(p: &AffinityMatrix, y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    gradient(p, y, 0.0, 1.0).0
}

pub fn barnes_hut_gradient(p: &AffinityMatrix, y: &[[f64; 2]], theta: f64) -> Vec<[f64; 2]> {
    gradient(p, y, theta, 1.0).0
}

fn kl_given_normalizer(p: &AffinityMatrix, y: &[[f64; 2]], z: f64) -> f64 {
    let per_row: Vec<f64> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let (cols, vals) = p.row(i);
            cols.iter()
                .zip(vals)
                .filter(|(_, &pij)| pij > 0.0)
                .map(|(&j, &pij)| {
                    let (w, _) = student_t(y[i], y[j]);
                    pij * (pij * z / w).ln()
                })
                .sum()
        })
        .collect();
    per_row.iter().sum()
}

/// Exact KL(P || Q) for the embedding `y`.
pub fn kl_divergence(p: &AffinityMatrix, y: &[[f64; 2]]) -> f64 {
    let z: f64 = repulsions(y, 0.0).iter().map(|r| r.0).sum();
    kl_given_normalizer(p, y, z)
}

/// Exact Q, row-major `n x n`, for checking normalization.
pub fn low_dimensional_affinities(y: &[[f64; 2]]) -> Vec<f64> {
    let n = y.len();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[i * n + j] = student_t(y[i], y[j]).0;
            }
        }
    }
    let z: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= z);
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlSample {
    /// Number of completed updates when the sample was taken.
    pub iteration: usize,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    /// n x 2 coordinates.
    pub y: DenseMatrix,
    pub final_kl: f64,
    pub kl_trace: Vec<KlSample>,
}

impl Embedding2D {
    pub fn kl_at(&self, iteration: usize) -> Option<f64> {
        self.kl_trace.iter().find(|s| s.iteration == iteration).map(|s| s.kl)
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.y.rows().map(|r| [r[0], r[1]]).collect()
    }
}

pub fn gaussian_init(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [INIT_STD * a, INIT_STD * b]
        })
        .collect()
}

fn recenter(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mut mean = [0.0; 2];
    for p in y.iter() {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    for p in y.iter_mut() {
        p[0] -= mean[0];
        p[1] -= mean[1];
    }
}

/// Optimize from the seeded Gaussian start.
pub fn tsne_optimize(p: &AffinityMatrix, config: &TsneConfig) -> Result<Embedding2D> {
    tsne_optimize_from(p, config, gaussian_init(p.n_points(), config.seed))
}

/// Gradient descent with momentum and per-coordinate gains from `y0`.
pub fn tsne_optimize_from(p: &AffinityMatrix, config: &TsneConfig, y0: Vec<[f64; 2]>) -> Result<Embedding2D> {
    config.validate()?;
    let n = p.n_points();
    if y0.len() != n {
        return Err(AtlasError::DimensionMismatch {
            expected: n,
            actual: y0.len(),
        });
    }
    let mut y = y0;
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut trace = Vec::new();
    for t in 0..config.n_iter {
        let exaggeration = if t < config.exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if t < config.momentum_switch_iter {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let (grad, z) = gradient(p, &y, config.theta, exaggeration);
        if t > 0 && t % KL_SAMPLE_EVERY == 0 {
            trace.push(KlSample {
                iteration: t,
                kl: kl_given_normalizer(p, &y, z),
            });
        }
        if let Some(point) = grad.iter().position(|g| !(g[0].is_finite() && g[1].is_finite())) {
            return Err(AtlasError::NonFiniteGradient { iteration: t, point });
        }
        for i in 0..n {
            for a in 0..2 {
                let g = grad[i][a];
                let gain = &mut gains[i][a];
                // grow the gain when the gradient disagrees with the current motion
                *gain = if (g > 0.0) != (velocity[i][a] > 0.0) {
                    *gain + 0.2
                } else {
                    *gain * 0.8
                };
                *gain = gain.max(MIN_GAIN);
                velocity[i][a] = momentum * velocity[i][a] - config.learning_rate * *gain * g;
                y[i][a] += velocity[i][a];
            }
        }
        recenter(&mut y);
    }
    let z: f64 = repulsions(&y, config.theta).iter().map(|r| r.0).sum();
    let final_kl = kl_given_normalizer(p, &y, z).max(0.0);
    if config.n_iter.is_multiple_of(KL_SAMPLE_EVERY) {
        trace.push(KlSample {
            iteration: config.n_iter,
            kl: final_kl,
        });
    }
    let values = y.iter().flat_map(|p| [p[0], p[1]]).collect();
    Ok(Embedding2D {
        y: DenseMatrix::from_vec(n, 2, values)?,
        final_kl,
        kl_trace: trace,
    })
}

/// Rows of another matrix, selected by index.
struct RowSubset<'a, M> {
    x: &'a M,
    rows: &'a [usize],
}

impl<M: RowMatrix> RowMatrix for RowSubset<'_, M> {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn n_cols(&self) -> usize {
        self.x.n_cols()
    }

    fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.x.row_dot(self.rows[i], v)
    }

    fn row_pair_dot(&self, i: usize, j: usize) -> f64 {
        self.x.row_pair_dot(self.rows[i], self.rows[j])
    }

    fn for_each_in_row(&self, i: usize, f: impl FnMut(usize, f64)) {
        self.x.for_each_in_row(self.rows[i], f)
    }

    fn row_squared_distance_with_norms(&self, i: usize, j: usize, norm_i: f64, norm_j: f64) -> f64 {
        self.x
            .row_squared_distance_with_norms(self.rows[i], self.rows[j], norm_i, norm_j)
    }
}

/// Exact-duplicate rows collapsed: the first occurrence of each distinct row,
/// and for every row the position of its representative in that list.
pub fn collapse_duplicates<M: RowMatrix>(x: &M) -> (Vec<usize>, Vec<usize>) {
    let mut seen: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
    let mut unique = Vec::new();
    let mut rep = Vec::with_capacity(x.n_rows());
    for i in 0..x.n_rows() {
        let mut key = Vec::new();
        x.for_each_in_row(i, |j, v| {
            if v != 0.0 {
                key.push((j, v.to_bits()));
            }
        });
        let slot = *seen.entry(key).or_insert_with(|| {
            unique.push(i);
            unique.len() - 1
        });
        rep.push(slot);
    }
    (unique, rep)
}

fn pca_init<M: RowMatrix>(x: &M, seed: u64) -> Result<Vec<[f64; 2]>> {
    let model = fit_pca(x, PcaTarget::Components(2))?;
    let proj = transform(x, &model)?;
    let mut y = gaussian_init(x.n_rows(), seed);
    let d = proj.n_cols();
    let first: Vec<f64> = proj.rows().map(|r| r[0]).collect();
    let std = (first.iter().map(|v| v * v).sum::<f64>() / first.len() as f64).sqrt();
    if std > 0.0 {
        for (yi, r) in y.iter_mut().zip(proj.rows()) {
            // a rank-one input keeps the Gaussian noise on the second axis
            for a in 0..d.min(2) {
                yi[a] = r[a] / std * INIT_STD;
            }
        }
    }
    Ok(y)
}

/// Full t-SNE on the rows of `x`: optional PCA pre-reduction, duplicate
/// collapse, affinity calibration, optimization, and re-expansion with
/// duplicates placed on their representative plus seeded 1e-6 jitter.
pub fn embed<M: RowMatrix>(x: &M, config: &TsneConfig) -> Result<Embedding2D> {
    config.validate()?;
    if config.pre_reduce && x.n_cols() > PRE_REDUCE_COMPONENTS {
        let model = fit_pca(x, PcaTarget::Components(PRE_REDUCE_COMPONENTS))?;
        let reduced = transform(x, &model)?;
        let inner = TsneConfig {
            pre_reduce: false,
            ..config.clone()
        };
        return embed(&reduced, &inner);
    }
    let (unique, rep) = collapse_duplicates(x);
    let sub = RowSubset { x, rows: &unique };
    let p = joint_affinities(&sub, config.perplexity, config.theta)?;
    let y0 = match config.init {
        TsneInit::Gaussian => gaussian_init(unique.len(), config.seed),
        TsneInit::Pca2d => pca_init(&sub, config.seed)?,
    };
    let collapsed = tsne_optimize_from(&p, config, y0).map_err(|e| match e {
        AtlasError::NonFiniteGradient { iteration, point } => AtlasError::NonFiniteGradient {
            iteration,
            point: unique[point],
        },
        other => other,
    })?;
    if unique.len() == x.n_rows() {
        return Ok(collapsed);
    }
    let mut jitter = ChaCha8Rng::seed_from_u64(config.seed);
    jitter.set_stream(1);
    let mut values = Vec::with_capacity(2 * x.n_rows());
    for (i, &r) in rep.iter().enumerate() {
        let base = collapsed.y.row(r);
        if unique[r] == i {
            values.extend_from_slice(base);
        } else {
            for &b in base {
                let z: f64 = StandardNormal.sample(&mut jitter);
                values.push(b + DUPLICATE_JITTER * z);
            }
        }
    }
    Ok(Embedding2D {
        y: DenseMatrix::from_vec(x.n_rows(), 2, values)?,
        ..collapsed
    })
}
