//! Seeded k-means (k-means++ initialization, Lloyd iterations) over feature
//! embeddings.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iters: usize,
    /// Stop once the relative inertia decrease falls below this.
    pub tol: f64,
    /// Measure distances in per-dimension standardized units.
    pub standardize: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iters: 100,
            tol: 1e-6,
            standardize: false,
        }
    }
}

/// Cluster centers in raw feature space. `dim_weights`, when present, holds
/// per-dimension inverse variances used by the distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    #[serde(with = "crate::serde_array::matrix")]
    pub points: Array2<f64>,
    pub inertia: f64,
    pub dim_weights: Option<Vec<f64>>,
}

impl Centroids {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::invalid("need at least one centroid"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("centroids contain non-finite values"));
        }
        Ok(Centroids {
            points,
            inertia: 0.0,
            dim_weights: None,
        })
    }

    pub fn k(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    fn distance(&self, x: ArrayView1<'_, f64>, j: usize) -> f64 {
        sq_distance(x, self.points.row(j), self.dim_weights.as_deref())
    }

    fn nearest(&self, x: ArrayView1<'_, f64>) -> (usize, f64) {
        let mut best = 0;
        let mut best_d = self.distance(x, 0);
        for j in 1..self.k() {
            let d = self.distance(x, j);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        (best, best_d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Centroids,
    /// Final assignment of the training points.
    labels: Vec<usize>,
    /// Inertia after the initial assignment and after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

fn sq_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, weights: Option<&[f64]>) -> f64 {
    match weights {
        None => a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum(),
        Some(w) => a
            .iter()
            .zip(b.iter())
            .zip(w)
            .map(|((x, y), w)| w * (x - y) * (x - y))
            .sum(),
    }
}

fn check_features(features: ArrayView2<'_, f64>) -> Result<()> {
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features contain non-finite values"));
    }
    Ok(())
}

/// Index of the nearest centroid per row (squared Euclidean, ties to the
/// lowest index).
pub fn assign(features: ArrayView2<'_, f64>, centroids: &Centroids) -> Result<Vec<usize>> {
    Ok(assign_with_distance(features, centroids)?
        .into_iter()
        .map(|(j, _)| j)
        .collect())
}

fn assign_with_distance(
    features: ArrayView2<'_, f64>,
    centroids: &Centroids,
) -> Result<Vec<(usize, f64)>> {
    if features.ncols() != centroids.dim() {
        return Err(Error::DimensionMismatch {
            what: "feature dimension",
            expected: centroids.dim(),
            actual: features.ncols(),
        });
    }
    Ok(par::map_range(features.nrows(), |i| {
        centroids.nearest(features.row(i))
    }))
}

fn inverse_variances(features: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = features.nrows() as f64;
    features
        .columns()
        .into_iter()
        .map(|col| {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / var
            } else {
                1.0
            }
        })
        .collect()
}

fn plus_plus_init(
    features: ArrayView2<'_, f64>,
    k: usize,
    weights: Option<&[f64]>,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let n = features.nrows();
    let mut centers = Array2::zeros((k, features.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&features.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_distance(features.row(i), centers.row(0), weights))
        .collect();
    for j in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > r && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(j).assign(&features.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_distance(features.row(i), centers.row(j), weights));
        }
    }
    centers
}

/// Fits `k` centroids. Deterministic for a given `(features, k, seed, config)`.
pub fn kmeans_fit(
    features: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<KMeansFit> {
    let n = features.nrows();
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the {n} points")));
    }
    check_features(features)?;
    let squares = features.iter().map(|v| v * v).sum::<f64>();
    if !squares.is_finite() {
        return Err(Error::invalid(
            "squared feature distances overflow; rescale the features",
        ));
    }

    let weights = config.standardize.then(|| inverse_variances(features));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Centroids {
        points: plus_plus_init(features, k, weights.as_deref(), &mut rng),
        inertia: 0.0,
        dim_weights: weights,
    };

    let mut assigned = assign_with_distance(features, &centroids)?;
    let mut inertia: f64 = assigned.iter().map(|(_, d)| d).sum();
    let mut history = vec![inertia];
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        update_centers(features, &mut centroids, &mut assigned);
        let next = assign_with_distance(features, &centroids)?;
        let next_inertia: f64 = next.iter().map(|(_, d)| d).sum();
        debug_assert!(
            next_inertia <= inertia * (1.0 + 1e-12) + 1e-300,
            "inertia increased from {inertia} to {next_inertia}"
        );
        history.push(next_inertia);
        let unchanged = next.iter().zip(&assigned).all(|(a, b)| a.0 == b.0);
        let small_step = inertia <= 0.0 || (inertia - next_inertia) <= config.tol * inertia;
        assigned = next;
        inertia = next_inertia;
        if unchanged || small_step {
            break;
        }
    }

    centroids.inertia = inertia;
    Ok(KMeansFit {
        centroids,
        labels: assigned.into_iter().map(|(j, _)| j).collect(),
        inertia_history: history,
        iterations,
    })
}

/// Moves every center to the mean of its points. A cluster left empty seizes
/// the point farthest from its current center (taken from a cluster with at
/// least two members).
fn update_centers(
    features: ArrayView2<'_, f64>,
    centroids: &mut Centroids,
    assigned: &mut [(usize, f64)],
) {
    let k = centroids.k();
    let mut counts = vec![0usize; k];
    for &(j, _) in assigned.iter() {
        counts[j] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let donor = assigned
            .iter()
            .enumerate()
            .filter(|(_, (c, _))| counts[*c] > 1)
            .fold(None::<(usize, f64)>, |best, (i, &(_, d))| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = donor {
            counts[assigned[i].0] -= 1;
            counts[j] = 1;
            assigned[i] = (j, 0.0);
        }
    }

    let mut sums = Array2::<f64>::zeros(centroids.points.dim());
    for (i, &(j, _)) in assigned.iter().enumerate() {
        let mut row = sums.row_mut(j);
        row += &features.row(i);
    }
    for (j, &count) in counts.iter().enumerate() {
        if count > 0 {
            let c = count as f64;
            let mut row = centroids.points.row_mut(j);
            row.assign(&sums.row(j));
            row.mapv_inplace(|v| v / c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand_distr::{Distribution, Normal};

    fn non_increasing(h: &[f64]) -> bool {
        h.windows(2).all(|w| w[1] <= w[0])
    }

    #[test]
    fn overflowing_scale_is_rejected() {
        let x = array![[1e200, 0.0], [-1e200, 1.0]];
        assert!(kmeans_fit(x.view(), 1, 0, &KMeansConfig::default()).is_err());
    }

    #[test]
    fn exact_fit_on_square_corners() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let fit = kmeans_fit(x.view(), 4, 0, &KMeansConfig::default()).unwrap();
        assert_eq!(fit.centroids.inertia, 0.0);
        let mut rows: Vec<Vec<f64>> = fit
            .centroids
            .points
            .outer_iter()
            .map(|r| r.to_vec())
            .collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            rows,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0]
            ]
        );
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let x = array![[1.0, 2.0], [3.0, 6.0], [5.0, 1.0]];
        let fit = kmeans_fit(x.view(), 1, 3, &KMeansConfig::default()).unwrap();
        assert_relative_eq!(fit.centroids.points[[0, 0]], 3.0, epsilon = 1e-12);
        assert_relative_eq!(fit.centroids.points[[0, 1]], 3.0, epsilon = 1e-12);
        // n * (var_x + var_y) = 3 * (8/3 + 14/3)
        assert_relative_eq!(fit.centroids.inertia, 22.0, epsilon = 1e-12);
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut x = Array2::zeros((100, 2));
        for i in 0..100 {
            let cx = if i < 50 { -5.0 } else { 5.0 };
            x[[i, 0]] = cx + noise.sample(&mut rng);
            x[[i, 1]] = noise.sample(&mut rng);
        }
        let fit = kmeans_fit(x.view(), 2, 42, &KMeansConfig::default()).unwrap();
        let l = fit.labels();
        assert!(l[..50].iter().all(|&v| v == l[0]));
        assert!(l[50..].iter().all(|&v| v == l[50]));
        assert_ne!(l[0], l[50]);
        assert!(non_increasing(&fit.inertia_history));
    }

    #[test]
    fn deterministic_and_consistent_with_assign() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((300, 4), |_| rng.random::<f64>());
        let a = kmeans_fit(x.view(), 7, 9, &KMeansConfig::default()).unwrap();
        let b = kmeans_fit(x.view(), 7, 9, &KMeansConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(assign(x.view(), &a.centroids).unwrap(), a.labels());
        assert!(non_increasing(&a.inertia_history));
    }

    #[test]
    fn duplicate_points_repair_empty_clusters() {
        let x = array![[0.0], [0.0], [0.0], [1.0], [1.0]];
        let fit = kmeans_fit(x.view(), 3, 5, &KMeansConfig::default()).unwrap();
        assert!(fit.centroids.points.iter().all(|v| v.is_finite()));
        assert!(non_increasing(&fit.inertia_history));
    }

    #[test]
    fn assign_ties_and_identity() {
        let c = Centroids::new(array![[0.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(
            assign(array![[1.0, 0.0], [2.0, 0.0], [0.0, 0.0]].view(), &c).unwrap(),
            vec![0, 1, 0]
        );
        assert!(matches!(
            assign(array![[1.0]].view(), &c),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn input_errors() {
        let x = array![[0.0], [1.0]];
        assert!(kmeans_fit(x.view(), 3, 0, &KMeansConfig::default()).is_err());
        let bad = array![[0.0], [f64::NAN]];
        assert!(kmeans_fit(bad.view(), 1, 0, &KMeansConfig::default()).is_err());
    }

    #[test]
    fn standardization_rescales_dimensions() {
        // dimension 1 has a huge spread but no cluster structure
        let x = array![[0.0, 0.0], [0.1, 100.0], [5.0, 50.0], [5.1, -50.0]];
        let cfg = KMeansConfig {
            standardize: true,
            ..KMeansConfig::default()
        };
        let fit = kmeans_fit(x.view(), 2, 0, &cfg).unwrap();
        assert!(fit.centroids.dim_weights.is_some());
        assert!(non_increasing(&fit.inertia_history));
    }
}
