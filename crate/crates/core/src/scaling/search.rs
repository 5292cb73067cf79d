use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2};

use super::sweep::{sweep_class_tallies, sweep_members_naive_tallies};
use super::{evaluate, grid_value, Grid, Provenance, ScalingVector, SearchConfig, TradeoffPool};
use crate::clustering::{kmeans_fit, KMeansConfig};
use crate::dataset::PredictionSet;
use crate::error::{Error, Result};
use crate::metrics::{MetricBundle, Target};
use crate::par;

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub scaling: ScalingVector,
    pub metrics: MetricBundle,
    pub pool: TradeoffPool,
}

impl SearchResult {
    pub fn target_value(&self, target: Target) -> f64 {
        target.value(&self.metrics)
    }
}

fn feasible(m: &MetricBundle, min_average: Option<f64>) -> bool {
    min_average.is_none_or(|c| m.average >= c)
}

/// Higher target, then higher average accuracy. `Greater` means `a` is better.
fn compare_metrics(a: &MetricBundle, b: &MetricBundle, target: Target) -> Ordering {
    target
        .value(a)
        .total_cmp(&target.value(b))
        .then(a.average.total_cmp(&b.average))
}

/// Winner of a one-coordinate sweep: best metrics, then exponent nearest 0,
/// then the smaller exponent.
fn pick_along_grid(
    bundles: &[MetricBundle],
    grid: &Grid,
    target: Target,
    min_average: Option<f64>,
) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, m) in bundles.iter().enumerate() {
        if !feasible(m, min_average) {
            continue;
        }
        best = match best {
            None => Some(j),
            Some(b) => {
                let (nj, nb) = (grid.exponent(j), grid.exponent(b));
                let ord = compare_metrics(m, &bundles[b], target)
                    .then(nb.abs().cmp(&nj.abs()))
                    .then(nb.cmp(&nj));
                if ord == Ordering::Greater {
                    Some(j)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

fn factors_of(base: f64, exponents: &[i32]) -> Vec<f64> {
    exponents.iter().map(|&n| grid_value(base, n)).collect()
}

fn finish(
    set: &PredictionSet,
    base: f64,
    exponents: &[i32],
    pool: TradeoffPool,
    min_average: Option<f64>,
) -> Result<SearchResult> {
    let scaling = ScalingVector::from_exponents(base, exponents)?;
    let metrics = evaluate(set, &scaling)?;
    if let Some(c) = min_average {
        if metrics.average < c {
            return Err(Error::Infeasible { min_average: c });
        }
    }
    Ok(SearchResult {
        scaling,
        metrics,
        pool,
    })
}

/// Coordinate-wise greedy search: classes are swept in `config.class_order`,
/// each over the whole grid with the other factors held at their current
/// values, and the sweep winner is kept before moving on.
///
/// `min_average` restricts winners to candidates with average accuracy at
/// least that value. If no evaluated candidate satisfies it the search
/// fails with [`Error::Infeasible`].
pub fn greedy_search(
    val: &PredictionSet,
    config: &SearchConfig,
    min_average: Option<f64>,
) -> Result<SearchResult> {
    let grid = Grid::new(config)?;
    let order = config.class_order(val.num_classes())?;
    let base = grid.base();
    let mut exponents = vec![0i32; val.num_classes()];
    let mut pool = TradeoffPool::new();

    for _ in 0..config.passes {
        for &class in &order {
            let factors = factors_of(base, &exponents);
            let tallies = sweep_class_tallies(val, &factors, class, &grid);
            let bundles = par::map_slice(&tallies, MetricBundle::from_tally);
            let winner = pick_along_grid(&bundles, &grid, config.target, min_average);
            for (j, m) in bundles.into_iter().enumerate() {
                let mut e = exponents.clone();
                e[class] = grid.exponent(j);
                pool.insert(
                    ScalingVector::from_exponents(base, &e)?,
                    m,
                    Provenance::GridSweep,
                );
            }
            if let Some(j) = winner {
                exponents[class] = grid.exponent(j);
                pool.mark(
                    &ScalingVector::from_exponents(base, &exponents)?,
                    Provenance::GreedyTrajectory,
                );
            }
        }
    }
    finish(val, base, &exponents, pool, min_average)
}

/// Exhaustive search with the class-0 factor pinned to 1. The last class is
/// swept incrementally for each combination of the others.
pub fn full_grid_search(
    val: &PredictionSet,
    config: &SearchConfig,
    min_average: Option<f64>,
) -> Result<SearchResult> {
    let grid = Grid::new(config)?;
    let c = val.num_classes();
    let g = grid.len() as u128;
    let required = g.checked_pow((c - 1) as u32).unwrap_or(u128::MAX);
    if required > config.max_evaluations as u128 {
        return Err(Error::BudgetExceeded {
            required,
            budget: config.max_evaluations,
        });
    }
    let base = grid.base();
    let last = c - 1;
    // combinations of classes 1..last, each over the grid
    let free = c - 2;
    let combos = grid.len().pow(free as u32);

    let sweeps: Vec<(Vec<i32>, Vec<MetricBundle>)> = par::map_range(combos, |idx| {
        let mut exponents = vec![0i32; c];
        let mut rest = idx;
        for e in exponents.iter_mut().take(last).skip(1).rev() {
            *e = grid.exponent(rest % grid.len());
            rest /= grid.len();
        }
        let factors = factors_of(base, &exponents);
        let tallies = sweep_class_tallies(val, &factors, last, &grid);
        (
            exponents,
            tallies.iter().map(MetricBundle::from_tally).collect(),
        )
    });

    let mut pool = TradeoffPool::new();
    let mut best: Option<(Vec<i32>, MetricBundle)> = None;
    for (prefix, bundles) in sweeps {
        for (j, m) in bundles.into_iter().enumerate() {
            let mut e = prefix.clone();
            e[last] = grid.exponent(j);
            if feasible(&m, min_average) {
                let better = match &best {
                    None => true,
                    Some((be, bm)) => {
                        let l1 = |v: &[i32]| v.iter().map(|x| x.unsigned_abs() as u64).sum::<u64>();
                        compare_metrics(&m, bm, config.target)
                            .then(l1(be).cmp(&l1(&e)))
                            .then(be.cmp(&e))
                            == Ordering::Greater
                    }
                };
                if better {
                    best = Some((e.clone(), m.clone()));
                }
            }
            pool.insert(
                ScalingVector::from_exponents(base, &e)?,
                m,
                Provenance::GridSweep,
            );
        }
    }
    match best {
        Some((e, _)) => finish(val, base, &e, pool, min_average),
        None => Err(Error::Infeasible {
            min_average: min_average.unwrap_or(0.0),
        }),
    }
}

/// Per-class mean feature vectors (`C x d`).
pub fn class_signatures(set: &PredictionSet) -> Result<Array2<f64>> {
    let features = set.require_features()?;
    let c = set.num_classes();
    let mut sums = Array2::<f64>::zeros((c, features.ncols()));
    let mut counts = vec![0usize; c];
    for (i, &y) in set.labels().iter().enumerate() {
        let mut row = sums.row_mut(y);
        row += &features.row(i);
        counts[y] += 1;
    }
    for (y, &k) in counts.iter().enumerate() {
        if k == 0 {
            return Err(Error::invalid(format!("class {y} has no samples")));
        }
        sums.row_mut(y).mapv_inplace(|v| v / k as f64);
    }
    Ok(sums)
}

/// Groups classes into `k` superclasses by clustering their signatures.
/// Superclass ids are numbered in order of first appearance.
pub fn derive_superclasses(
    signatures: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if k == 0 || k > signatures.nrows() {
        return Err(Error::invalid(format!(
            "superclass count {k} must be in 1..={}",
            signatures.nrows()
        )));
    }
    let fit = kmeans_fit(signatures, k, seed, &KMeansConfig::default())?;
    let mut relabel = vec![usize::MAX; k];
    let mut next = 0;
    Ok(fit
        .labels()
        .iter()
        .map(|&l| {
            if relabel[l] == usize::MAX {
                relabel[l] = next;
                next += 1;
            }
            relabel[l]
        })
        .collect())
}

/// Greedy search over one shared factor per superclass.
pub fn superclass_search(
    val: &PredictionSet,
    config: &SearchConfig,
    assignment: &[usize],
    min_average: Option<f64>,
) -> Result<SearchResult> {
    let c = val.num_classes();
    if assignment.len() != c {
        return Err(Error::DimensionMismatch {
            what: "superclass assignment",
            expected: c,
            actual: assignment.len(),
        });
    }
    let grid = Grid::new(config)?;
    let base = grid.base();
    let mut ids: Vec<usize> = assignment.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let members: Vec<Vec<usize>> = ids
        .iter()
        .map(|&id| (0..c).filter(|&cls| assignment[cls] == id).collect())
        .collect();

    let mut exponents = vec![0i32; c];
    let mut pool = TradeoffPool::new();
    for _ in 0..config.passes {
        for group in &members {
            let factors = factors_of(base, &exponents);
            let tallies = sweep_members_naive_tallies(val, &factors, group, &grid);
            let bundles = par::map_slice(&tallies, MetricBundle::from_tally);
            let winner = pick_along_grid(&bundles, &grid, config.target, min_average);
            for (j, m) in bundles.into_iter().enumerate() {
                let mut e = exponents.clone();
                for &cls in group {
                    e[cls] = grid.exponent(j);
                }
                pool.insert(
                    ScalingVector::from_exponents(base, &e)?,
                    m,
                    Provenance::GridSweep,
                );
            }
            if let Some(j) = winner {
                for &cls in group {
                    exponents[cls] = grid.exponent(j);
                }
                pool.mark(
                    &ScalingVector::from_exponents(base, &exponents)?,
                    Provenance::GreedyTrajectory,
                );
            }
        }
    }
    finish(val, base, &exponents, pool, min_average)
}
