//! Pareto frontier of (average accuracy, robust accuracy) pairs and the
//! robust coverage: the discretized area under that frontier,
//!
//! ```text
//! coverage = (1/D) * sum_{d=0}^{D-1} max { RA(s) : AA(s) >= d/D }
//! ```
//!
//! where a threshold with no feasible point contributes 0.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::PredictionSet;
use crate::error::{Error, Result};
use crate::metrics::RobustTarget;
use crate::scaling::{evaluate, ScalingVector, TradeoffPool};

pub const DEFAULT_SLICES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub average: f64,
    pub robust: f64,
    pub scaling: ScalingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub coverage: f64,
    pub slices: usize,
    pub target: RobustTarget,
    /// Sorted by average accuracy descending.
    pub frontier: Vec<FrontierPoint>,
    pub feasible_thresholds: usize,
    /// Mean of the per-threshold maxima over feasible thresholds only.
    pub feasible_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedCoverage {
    pub value: f64,
    pub slices: usize,
    pub feasible_thresholds: usize,
}

fn frontier_order(a: &FrontierPoint, b: &FrontierPoint) -> Ordering {
    b.average
        .total_cmp(&a.average)
        .then(b.robust.total_cmp(&a.robust))
        .then_with(|| a.scaling.canonical_key().cmp(&b.scaling.canonical_key()))
}

/// Points of the pool not dominated by any other (at least as good on both
/// axes and strictly better on one). Ordered by average accuracy descending,
/// then robust accuracy descending, then canonical scaling.
pub fn pareto_frontier(pool: &TradeoffPool, target: RobustTarget) -> Result<Vec<FrontierPoint>> {
    pareto_frontier_union(&[pool], target)
}

/// Frontier of several pools taken together. Points are never merged across
/// pools, so the pools may describe different model families whose scaling
/// vectors coincide.
pub fn pareto_frontier_union(
    pools: &[&TradeoffPool],
    target: RobustTarget,
) -> Result<Vec<FrontierPoint>> {
    if pools.iter().all(|p| p.is_empty()) {
        return Err(Error::invalid("trade-off pool is empty"));
    }
    let mut points: Vec<FrontierPoint> = pools
        .iter()
        .flat_map(|pool| pool.points())
        .map(|p| FrontierPoint {
            average: p.metrics.average,
            robust: target.value(&p.metrics),
            scaling: p.scaling.clone(),
        })
        .collect();
    points.sort_by(frontier_order);

    let mut frontier = Vec::new();
    // best robust accuracy among points with strictly higher average
    let mut best_above = f64::NEG_INFINITY;
    let mut i = 0;
    while i < points.len() {
        let average = points[i].average;
        let top = points[i].robust;
        let mut j = i;
        while j < points.len() && points[j].average == average {
            if points[j].robust == top && top > best_above {
                frontier.push(points[j].clone());
            }
            j += 1;
        }
        best_above = best_above.max(top);
        i = j;
    }
    Ok(frontier)
}

/// For each frontier level (distinct (AA, RA) pair, represented by its first
/// point), how many thresholds `d/D` it wins.
fn threshold_counts(frontier: &[FrontierPoint], slices: usize) -> Vec<(usize, usize)> {
    let mut levels: Vec<usize> = Vec::new();
    for (i, p) in frontier.iter().enumerate() {
        match levels.last() {
            Some(&l) if frontier[l].average == p.average && frontier[l].robust == p.robust => {}
            _ => levels.push(i),
        }
    }
    let mut counts = vec![0usize; levels.len()];
    let mut live = levels.len();
    for d in 0..slices {
        let threshold = d as f64 / slices as f64;
        while live > 0 && frontier[levels[live - 1]].average < threshold {
            live -= 1;
        }
        if live == 0 {
            break;
        }
        counts[live - 1] += 1;
    }
    levels
        .into_iter()
        .zip(counts)
        .filter(|&(_, c)| c > 0)
        .collect()
}

/// Unevaluated sum `hi + lo` in double-double precision.
#[derive(Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    fn add(self, x: f64) -> Self {
        let s = self.hi + x;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x - bp);
        let lo = self.lo + err;
        let hi = s + lo;
        DoubleDouble {
            hi,
            lo: lo - (hi - s),
        }
    }

    fn div(self, d: usize) -> f64 {
        let d = d as f64;
        let q = self.hi / d;
        let r = (-q).mul_add(d, self.hi) + self.lo;
        q + r / d
    }
}

/// `sum count * value`, accumulated without intermediate rounding loss so
/// the discretized area is reproduced to the last bit.
fn weighted_sum(terms: impl Iterator<Item = (usize, f64)>) -> DoubleDouble {
    terms.fold(DoubleDouble { hi: 0.0, lo: 0.0 }, |acc, (count, value)| {
        let c = count as f64;
        let p = c * value;
        let err = c.mul_add(value, -p);
        acc.add(p).add(err)
    })
}

pub fn robust_coverage(
    pool: &TradeoffPool,
    target: RobustTarget,
    slices: usize,
) -> Result<CoverageReport> {
    robust_coverage_union(&[pool], target, slices)
}

/// Coverage of the frontier of [`pareto_frontier_union`].
pub fn robust_coverage_union(
    pools: &[&TradeoffPool],
    target: RobustTarget,
    slices: usize,
) -> Result<CoverageReport> {
    if slices == 0 {
        return Err(Error::invalid("slice count must be positive"));
    }
    let frontier = pareto_frontier_union(pools, target)?;
    let counts = threshold_counts(&frontier, slices);
    let feasible: usize = counts.iter().map(|&(_, c)| c).sum();
    let sum = weighted_sum(counts.iter().map(|&(i, c)| (c, frontier[i].robust)));
    Ok(CoverageReport {
        coverage: sum.div(slices),
        slices,
        target,
        frontier,
        feasible_thresholds: feasible,
        feasible_mean: (feasible > 0).then(|| sum.div(feasible)),
    })
}

/// Test-split robust accuracy averaged over the validation-optimal scaling of
/// every feasible threshold. Thresholds are weighted equally, so a scaling
/// that wins several thresholds counts several times.
pub fn realized_coverage(
    val_pool: &TradeoffPool,
    test: &PredictionSet,
    target: RobustTarget,
    slices: usize,
) -> Result<RealizedCoverage> {
    if slices == 0 {
        return Err(Error::invalid("slice count must be positive"));
    }
    if let Some(p) = val_pool.points().first() {
        if p.metrics.per_group.len() != test.num_groups() {
            return Err(Error::DimensionMismatch {
                what: "group count of test split",
                expected: p.metrics.per_group.len(),
                actual: test.num_groups(),
            });
        }
    }
    let frontier = pareto_frontier(val_pool, target)?;
    let counts = threshold_counts(&frontier, slices);
    let feasible: usize = counts.iter().map(|&(_, c)| c).sum();
    if feasible == 0 {
        return Err(Error::NoFeasibleThreshold);
    }
    let mut terms = Vec::with_capacity(counts.len());
    for &(i, c) in &counts {
        let test_metrics = evaluate(test, &frontier[i].scaling)?;
        terms.push((c, target.value(&test_metrics)));
    }
    Ok(RealizedCoverage {
        value: weighted_sum(terms.into_iter()).div(feasible),
        slices,
        feasible_thresholds: feasible,
    })
}
