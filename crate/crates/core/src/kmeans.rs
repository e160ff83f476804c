//! Lloyd's k-means with k-means++ seeding, and the elbow sweep that picks k.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};
use crate::matrix::{squared_distance, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    #[default]
    KMeansPlusPlus,
    /// k distinct instances chosen uniformly at random.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub n_init: usize,
    pub max_iter: usize,
    /// Convergence threshold relative to the mean per-feature variance.
    pub tol: f64,
    pub init: InitMethod,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_iter: 300,
            tol: 1e-4,
            init: InitMethod::KMeansPlusPlus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: DenseMatrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub n_iter_run: usize,
    pub seed: u64,
    /// Inertia after every assignment step of the winning run.
    pub inertia_history: Vec<f64>,
}

/// Sum of squared distances from each point to its labeled centroid.
pub fn inertia(x: &DenseMatrix, centroids: &DenseMatrix, labels: &[usize]) -> f64 {
    x.rows()
        .zip(labels)
        .map(|(row, &l)| squared_distance(row, centroids.row(l)))
        .sum()
}

fn nearest(row: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.rows().enumerate() {
        let d = squared_distance(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(x: &DenseMatrix, centroids: &DenseMatrix) -> (Vec<usize>, Vec<f64>) {
    (0..x.n_rows())
        .into_par_iter()
        .map(|i| nearest(x.row(i), centroids))
        .unzip()
}

// Means of assigned points, summed in point order. An empty cluster is moved
// onto the point farthest from its current centroid.
fn update(x: &DenseMatrix, labels: &[usize], dists: &[f64], k: usize) -> DenseMatrix {
    let dim = x.n_cols();
    let mut sums = DenseMatrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (row, &l) in x.rows().zip(labels) {
        counts[l] += 1;
        sums.row_mut(l).iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    let mut far: Vec<usize> = Vec::new();
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            sums.row_mut(c).iter_mut().for_each(|s| *s /= n);
        } else {
            if far.is_empty() {
                far = (0..x.n_rows()).collect();
                // farthest last; ties by index so the order is deterministic
                far.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            }
            let p = far.pop().expect("k <= n leaves a point to reseed with");
            sums.row_mut(c).copy_from_slice(x.row(p));
        }
    }
    sums
}

fn tolerance(x: &DenseMatrix, tol: f64) -> f64 {
    let var = x.column_variances();
    if var.is_empty() {
        return 0.0;
    }
    tol * var.iter().sum::<f64>() / var.len() as f64
}

fn check_k(x: &DenseMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(AtlasError::invalid("k must be at least 1"));
    }
    if k > x.n_rows() {
        return Err(AtlasError::invalid(format!(
            "k = {k} exceeds the number of points ({})",
            x.n_rows()
        )));
    }
    Ok(())
}

/// One Lloyd run from the given initial centroids.
pub fn lloyd(x: &DenseMatrix, init: DenseMatrix, max_iter: usize, tol: f64) -> Result<KMeansModel> {
    let k = init.n_rows();
    check_k(x, k)?;
    if init.n_cols() != x.n_cols() {
        return Err(AtlasError::DimensionMismatch {
            expected: x.n_cols(),
            actual: init.n_cols(),
        });
    }
    let tol_abs = tolerance(x, tol);
    let mut centroids = init;
    let (mut labels, mut dists) = assign(x, &centroids);
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut n_iter = 0;
    while n_iter < max_iter {
        let next = update(x, &labels, &dists, k);
        let shift: f64 = next
            .rows()
            .zip(centroids.rows())
            .map(|(a, b)| squared_distance(a, b))
            .sum();
        centroids = next;
        let (new_labels, new_dists) = assign(x, &centroids);
        n_iter += 1;
        history.push(new_dists.iter().sum());
        let unchanged = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        if unchanged || shift <= tol_abs {
            break;
        }
    }
    Ok(KMeansModel {
        k,
        inertia: *history.last().expect("history starts non-empty"),
        centroids,
        labels,
        n_iter_run: n_iter,
        seed: 0,
        inertia_history: history,
    })
}

fn init_plus_plus(x: &DenseMatrix, k: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let n = x.n_rows();
    let mut centroids = DenseMatrix::zeros(k, x.n_cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut closest: Vec<f64> = x.rows().map(|r| squared_distance(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in closest.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, row) in x.rows().enumerate() {
            closest[i] = closest[i].min(squared_distance(row, x.row(pick)));
        }
    }
    centroids
}

fn init_random(x: &DenseMatrix, k: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let mut centroids = DenseMatrix::zeros(k, x.n_cols());
    for (c, i) in sample(rng, x.n_rows(), k).into_iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(x.row(i));
    }
    centroids
}

/// Best of `n_init` seeded Lloyd runs (lowest inertia, earliest on ties).
pub fn kmeans_fit(x: &DenseMatrix, k: usize, seed: u64, config: &KMeansConfig) -> Result<KMeansModel> {
    check_k(x, k)?;
    if config.n_init == 0 {
        return Err(AtlasError::invalid("n_init must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansModel> = None;
    for _ in 0..config.n_init {
        let init = match config.init {
            InitMethod::KMeansPlusPlus => init_plus_plus(x, k, &mut rng),
            InitMethod::Random => init_random(x, k, &mut rng),
        };
        let run = lloyd(x, init, config.max_iter, config.tol)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut best = best.expect("n_init >= 1");
    best.seed = seed;
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElbowConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub step: usize,
}

impl Default for ElbowConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 40,
            step: 2,
        }
    }
}

impl ElbowConfig {
    pub fn ks(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).step_by(self.step.max(1)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowPoint {
    pub k: usize,
    pub distortion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub entries: Vec<ElbowPoint>,
    pub chosen_k: usize,
}

impl ElbowCurve {
    /// `k,distortion` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,distortion\n");
        for e in &self.entries {
            out.push_str(&format!("{},{}\n", e.k, e.distortion));
        }
        out
    }

    /// Number of adjacent pairs where distortion goes up with k.
    pub fn inversions(&self) -> usize {
        self.entries
            .windows(2)
            .filter(|w| w[1].distortion > w[0].distortion)
            .count()
    }
}

/// A curve whose log-distortion is this close to linear in log k (by R^2)
/// decays as a single power law, which is what unstructured data produces.
/// Such curves carry no elbow and the knee falls back to the smallest k.
pub const POWER_LAW_R2: f64 = 0.97;

/// Coefficient of determination of a least-squares line through
/// `(ln k, ln distortion)`. `None` when some distortion is not positive.
pub fn log_log_r2(entries: &[ElbowPoint]) -> Option<f64> {
    if entries.len() < 3 || entries.iter().any(|e| e.distortion <= 0.0 || e.k == 0) {
        return None;
    }
    let n = entries.len() as f64;
    let xs: Vec<f64> = entries.iter().map(|e| (e.k as f64).ln()).collect();
    let ys: Vec<f64> = entries.iter().map(|e| e.distortion.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if syy == 0.0 {
        return Some(1.0);
    }
    Some(sxy * sxy / (sxx * syy))
}

/// Knee of a decreasing curve: the point farthest from the chord joining the
/// endpoints, after min-max scaling both axes to [0, 1]. Constant curves and
/// pure power laws (see [`POWER_LAW_R2`]) report the smallest k.
pub fn knee_by_chord(entries: &[ElbowPoint]) -> Result<usize> {
    let (first, last) = match (entries.first(), entries.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(AtlasError::invalid("knee of an empty curve")),
    };
    if entries.len() < 3 {
        return Ok(first.k);
    }
    let (d_min, d_max) = entries.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        (lo.min(e.distortion), hi.max(e.distortion))
    });
    if d_max <= d_min || log_log_r2(entries).is_some_and(|r2| r2 >= POWER_LAW_R2) {
        return Ok(first.k);
    }
    let k_span = (last.k - first.k) as f64;
    let d_span = d_max - d_min;
    let scaled = |e: &ElbowPoint| ((e.k - first.k) as f64 / k_span, (e.distortion - d_min) / d_span);
    let (x0, y0) = scaled(first);
    let (x1, y1) = scaled(last);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len = dx.hypot(dy);
    let mut best = (first.k, f64::NEG_INFINITY);
    for e in entries {
        let (x, y) = scaled(e);
        let dist = (dy * (x - x0) - dx * (y - y0)).abs() / len;
        if dist > best.1 {
            best = (e.k, dist);
        }
    }
    Ok(best.0)
}

/// Fit k-means for every k in the sweep with the same seed and report the
/// knee of the distortion curve.
pub fn elbow_sweep(
    x: &DenseMatrix,
    sweep: &ElbowConfig,
    seed: u64,
    config: &KMeansConfig,
) -> Result<ElbowCurve> {
    if sweep.step == 0 {
        return Err(AtlasError::invalid("elbow step must be at least 1"));
    }
    if sweep.k_min == 0 || sweep.k_min >= sweep.k_max {
        return Err(AtlasError::invalid(format!(
            "elbow range needs 1 <= k_min < k_max, got {}..{}",
            sweep.k_min, sweep.k_max
        )));
    }
    if sweep.k_max > x.n_rows() {
        return Err(AtlasError::invalid(format!(
            "elbow k_max = {} exceeds the number of points ({})",
            sweep.k_max,
            x.n_rows()
        )));
    }
    let entries = sweep
        .ks()
        .into_par_iter()
        .map(|k| {
            kmeans_fit(x, k, seed, config).map(|m| ElbowPoint {
                k,
                distortion: m.inertia,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let chosen_k = knee_by_chord(&entries)?;
    Ok(ElbowCurve { entries, chosen_k })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_groups() -> DenseMatrix {
        DenseMatrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]).unwrap()
    }

    #[test]
    fn two_groups_hand_computed() {
        let m = kmeans_fit(&two_groups(), 2, 7, &KMeansConfig::default()).unwrap();
        let mut cs = m.centroids.to_rows();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
        // four points each 0.5 from their centroid: 4 * 0.25
        assert!((m.inertia - 1.0).abs() < 1e-12);
        assert_eq!(m.labels[0], m.labels[1]);
        assert_ne!(m.labels[0], m.labels[2]);
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let x = two_groups();
        let m = kmeans_fit(&x, 4, 1, &KMeansConfig::default()).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut labels = m.labels.clone();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn invalid_k() {
        let x = two_groups();
        assert!(kmeans_fit(&x, 0, 1, &KMeansConfig::default()).is_err());
        assert!(kmeans_fit(&x, 5, 1, &KMeansConfig::default()).is_err());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // both initial centroids far from the data; the second never wins
        let x = two_groups();
        let init = DenseMatrix::from_rows(&[[5.0, 0.5], [100.0, 100.0]]).unwrap();
        let m = lloyd(&x, init, 100, 1e-4).unwrap();
        assert!((m.inertia - 1.0).abs() < 1e-12);
        assert_eq!(m.k, 2);
    }

    #[test]
    fn random_init_also_converges() {
        let cfg = KMeansConfig {
            init: InitMethod::Random,
            ..KMeansConfig::default()
        };
        let m = kmeans_fit(&two_groups(), 2, 3, &cfg).unwrap();
        assert!((m.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inertia_matches_recomputation_and_labels_are_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let m = kmeans_fit(&x, 4, 5, &KMeansConfig::default()).unwrap();
        let again = inertia(&x, &m.centroids, &m.labels);
        assert!((again - m.inertia).abs() <= 1e-6 * m.inertia);
        for (row, &l) in x.rows().zip(&m.labels) {
            let own = squared_distance(row, m.centroids.row(l));
            for c in m.centroids.rows() {
                assert!(own <= squared_distance(row, c) + 1e-12);
            }
        }
        assert!(m.inertia_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn same_seed_same_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..2).map(|_| rng.random::<f64>()).collect())
            .collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let a = kmeans_fit(&x, 5, 9, &KMeansConfig::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| kmeans_fit(&x, 5, 9, &KMeansConfig::default()).unwrap());
        assert_eq!(a, b);
    }

    fn points(ds: &[f64]) -> Vec<ElbowPoint> {
        ds.iter()
            .enumerate()
            .map(|(i, &d)| ElbowPoint { k: 2 + 2 * i, distortion: d })
            .collect()
    }

    #[test]
    fn knee_of_sharp_elbow() {
        let curve = points(&[100.0, 60.0, 25.0, 5.0, 4.5, 4.0, 3.6]);
        assert_eq!(knee_by_chord(&curve).unwrap(), 8);
    }

    #[test]
    fn flat_curve_returns_smallest_k() {
        let curve = points(&[10.0, 9.5, 9.1, 8.8, 8.6, 8.4]);
        assert_eq!(knee_by_chord(&curve).unwrap(), 2);
        let zero = points(&[0.0, 0.0, 0.0]);
        assert_eq!(knee_by_chord(&zero).unwrap(), 2);
    }

    #[test]
    fn knee_of_straight_line_is_an_endpoint_tie() {
        // every point lies on the chord; the first maximum wins
        let curve = points(&[40.0, 30.0, 20.0, 10.0, 0.0]);
        assert_eq!(knee_by_chord(&curve).unwrap(), 2);
    }

    #[test]
    fn exact_power_law_has_no_elbow() {
        let curve: Vec<ElbowPoint> = (1..=20)
            .map(|i| ElbowPoint { k: 2 * i, distortion: 500.0 * (2.0 * i as f64).powf(-0.4) })
            .collect();
        assert!((log_log_r2(&curve).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(knee_by_chord(&curve).unwrap(), 2);
    }

    #[test]
    fn single_gaussian_has_no_elbow() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for dim in [2, 10] {
            let values = (0..400 * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x = DenseMatrix::from_vec(400, dim, values).unwrap();
            let curve = elbow_sweep(&x, &ElbowConfig::default(), 3, &KMeansConfig::default()).unwrap();
            assert_eq!(curve.chosen_k, 2, "dim {dim}");
        }
    }

    #[test]
    fn blobs_break_the_power_law() {
        let (x, _) = crate::synthetic::gaussian_blobs(8, 30, 4, 10.0, 1.0, 5);
        let sweep = ElbowConfig { k_min: 2, k_max: 20, step: 2 };
        let curve = elbow_sweep(&x, &sweep, 1, &KMeansConfig::default()).unwrap();
        assert!(log_log_r2(&curve.entries).unwrap() < POWER_LAW_R2);
        assert!((6..=10).contains(&curve.chosen_k), "chose {}", curve.chosen_k);
    }

    #[test]
    fn csv_format() {
        let curve = ElbowCurve {
            entries: points(&[3.5, 1.0]),
            chosen_k: 2,
        };
        assert_eq!(curve.to_csv(), "k,distortion\n2,3.5\n4,1\n");
        assert_eq!(curve.inversions(), 0);
    }

    #[test]
    fn sweep_rejects_bad_ranges() {
        let x = two_groups();
        let cfg = KMeansConfig::default();
        let bad = |k_min, k_max, step| ElbowConfig { k_min, k_max, step };
        assert!(elbow_sweep(&x, &bad(3, 2, 1), 0, &cfg).is_err());
        assert!(elbow_sweep(&x, &bad(2, 5, 1), 0, &cfg).is_err());
        assert!(elbow_sweep(&x, &bad(1, 4, 0), 0, &cfg).is_err());
        let ok = elbow_sweep(&x, &bad(1, 4, 1), 0, &cfg).unwrap();
        assert_eq!(ok.entries.len(), 4);
        assert_eq!(ok.entries[3].distortion, 0.0);
    }
}
