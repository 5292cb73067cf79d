//! Instance-wise robust scaling: cluster the validation features, search a
//! scaling vector per cluster, and route every test sample to the vector of
//! its nearest centroid.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign, kmeans_fit, Centroids, KMeansConfig};
use crate::coverage::{robust_coverage_union, CoverageReport};
use crate::dataset::PredictionSet;
use crate::error::{Error, Result};
use crate::metrics::{RobustTarget, Target};
use crate::par;
use crate::scaling::{greedy_search, ScalingVector, SearchConfig};

pub const DEFAULT_CLUSTERS: usize = 20;
pub const DEFAULT_K_CANDIDATES: [usize; 6] = [1, 2, 5, 10, 20, 50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrsOptions {
    pub seed: u64,
    /// Clusters with fewer validation samples keep the identity scaling.
    pub min_cluster_size: usize,
    pub kmeans: KMeansConfig,
}

impl Default for IrsOptions {
    fn default() -> Self {
        IrsOptions {
            seed: 0,
            min_cluster_size: 5,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScalingModel {
    pub centroids: Centroids,
    pub per_cluster_scaling: Vec<ScalingVector>,
    pub target: Target,
}

impl ClusterScalingModel {
    pub fn new(
        centroids: Centroids,
        per_cluster_scaling: Vec<ScalingVector>,
        target: Target,
    ) -> Result<Self> {
        if per_cluster_scaling.len() != centroids.k() {
            return Err(Error::DimensionMismatch {
                what: "per-cluster scalings",
                expected: centroids.k(),
                actual: per_cluster_scaling.len(),
            });
        }
        Ok(ClusterScalingModel {
            centroids,
            per_cluster_scaling,
            target,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.k()
    }
}

/// Greedy search restricted to each subset of `val`; subsets that are too
/// small or contain a single class keep the identity.
pub(crate) fn search_per_subset(
    val: &PredictionSet,
    members: &[Vec<usize>],
    config: &SearchConfig,
    min_size: usize,
) -> Result<Vec<ScalingVector>> {
    let c = val.num_classes();
    par::map_slice(members, |idx| {
        if idx.is_empty() || idx.len() < min_size {
            return ScalingVector::from_exponents(config.grid_base, &vec![0; c]);
        }
        let subset = val.subset(idx)?;
        if subset.distinct_labels() < 2 {
            return ScalingVector::from_exponents(config.grid_base, &vec![0; c]);
        }
        Ok(greedy_search(&subset, config, None)?.scaling)
    })
    .into_iter()
    .collect()
}

pub(crate) fn members_by(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members
}

pub fn irs_fit(
    val: &PredictionSet,
    k: usize,
    config: &SearchConfig,
    options: &IrsOptions,
) -> Result<ClusterScalingModel> {
    let features = val.require_features()?;
    let fit = kmeans_fit(features, k, options.seed, &options.kmeans)?;
    let members = members_by(fit.labels(), k);
    let scalings = search_per_subset(val, &members, config, options.min_cluster_size)?;
    ClusterScalingModel::new(fit.centroids, scalings, config.target)
}

/// Nearest-centroid cluster of every sample, then that cluster's scaling.
pub fn irs_predict(test: &PredictionSet, model: &ClusterScalingModel) -> Result<Vec<usize>> {
    let clusters = assign(test.require_features()?, &model.centroids)?;
    route_predictions(test, &clusters, &model.per_cluster_scaling)
}

pub(crate) fn route_predictions(
    set: &PredictionSet,
    routes: &[usize],
    scalings: &[ScalingVector],
) -> Result<Vec<usize>> {
    if let Some(s) = scalings.iter().find(|s| s.len() != set.num_classes()) {
        return Err(Error::DimensionMismatch {
            what: "scaling vector",
            expected: set.num_classes(),
            actual: s.len(),
        });
    }
    let scores = set.scores();
    Ok(par::map_range(set.len(), |i| {
        let f = scalings[routes[i]].factors();
        let row = scores.row(i);
        let mut best = 0;
        let mut best_value = f[0] * row[0];
        for c in 1..f.len() {
            let v = f[c] * row[c];
            if v > best_value {
                best = c;
                best_value = v;
            }
        }
        best
    }))
}

/// Scores after applying each sample's routed scaling, renormalized per row.
/// Any further global scaling of these scores composes with the routed one,
/// which is how trade-off curves of adaptive models are traced.
pub(crate) fn routed_scores(
    set: &PredictionSet,
    routes: &[usize],
    scalings: &[ScalingVector],
) -> Result<PredictionSet> {
    let mut scores = Array2::zeros(set.scores().dim());
    for (i, mut row) in scores.outer_iter_mut().enumerate() {
        let f = scalings[routes[i]].factors();
        let src = set.score_row(i);
        for c in 0..f.len() {
            row[c] = f[c] * src[c];
        }
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    set.with_scores(scores)
}

/// Validation robust coverage of an IRS model.
///
/// The model family of IRS contains every single scaling vector (all
/// clusters sharing it), so the trade-off pool is the plain greedy pool
/// together with the pool of a greedy search run on top of the
/// cluster-scaled scores. The second pool traces the curve through the
/// fitted model.
pub fn irs_coverage(
    val: &PredictionSet,
    model: &ClusterScalingModel,
    config: &SearchConfig,
    target: RobustTarget,
    slices: usize,
) -> Result<CoverageReport> {
    let config = config.clone().with_target(target.as_target());
    let clusters = assign(val.require_features()?, &model.centroids)?;
    let adjusted = routed_scores(val, &clusters, &model.per_cluster_scaling)?;
    let shared = greedy_search(val, &config, None)?;
    let routed = greedy_search(&adjusted, &config, None)?;
    robust_coverage_union(&[&shared.pool, &routed.pool], target, slices)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    /// `(K, validation robust coverage)` per candidate, in candidate order.
    pub coverages: Vec<(usize, f64)>,
}

/// Picks the cluster count with the highest validation robust coverage;
/// ties go to the smaller K.
pub fn select_k(
    val: &PredictionSet,
    candidates: &[usize],
    config: &SearchConfig,
    options: &IrsOptions,
    target: RobustTarget,
    slices: usize,
) -> Result<KSelection> {
    if candidates.is_empty() {
        return Err(Error::invalid("no K candidates"));
    }
    let mut coverages = Vec::with_capacity(candidates.len());
    for &k in candidates {
        let model = irs_fit(val, k, config, options)?;
        let report = irs_coverage(val, &model, config, target, slices)?;
        coverages.push((k, report.coverage));
    }
    let best = coverages
        .iter()
        .copied()
        .reduce(|best, cur| {
            if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                cur
            } else {
                best
            }
        })
        .expect("nonempty");
    Ok(KSelection {
        k: best.0,
        coverages,
    })
}
