//! Evaluating every grid value of one coordinate with the others held fixed.
//!
//! The fast path exploits that, as the factor of `class` grows, each sample's
//! prediction switches at most once: from the best competing class `o` to
//! `class`. A binary search over the ascending grid finds that switch point
//! per sample, and per-group difference arrays turn the switch points into
//! hit counts for every grid value. The comparisons are the same floating
//! point products the naive argmax uses, so the two paths agree exactly.

use super::{predict_with_factors, tally_predictions, Grid, ScalingVector, SearchConfig};
use crate::dataset::PredictionSet;
use crate::error::{Error, Result};
use crate::metrics::{GroupTally, MetricBundle};
use crate::par;

/// Tallies for `factors` with `factors[class]` replaced by each grid value.
pub(crate) fn sweep_class_tallies(
    set: &PredictionSet,
    factors: &[f64],
    class: usize,
    grid: &Grid,
) -> Vec<GroupTally> {
    let scores = set.scores();
    let num_classes = set.num_classes();
    let values = grid.values();

    // (switch index, best competing class)
    let switches: Vec<(usize, usize)> = par::map_range(set.len(), |i| {
        let row = scores.row(i);
        let mut rival = usize::MAX;
        let mut rival_value = f64::NEG_INFINITY;
        for c in (0..num_classes).filter(|&c| c != class) {
            let v = factors[c] * row[c];
            if v > rival_value {
                rival = c;
                rival_value = v;
            }
        }
        let p = row[class];
        let wins = |v: f64| {
            let x = v * p;
            x > rival_value || (x == rival_value && class < rival)
        };
        (values.partition_point(|&v| !wins(v)), rival)
    });

    let g = set.num_groups();
    let len = grid.len();
    let mut delta = vec![0i64; g * (len + 1)];
    let mut total = vec![0u64; g];
    for (i, &(switch, rival)) in switches.iter().enumerate() {
        let group = set.group_of(i).index(set.num_attributes());
        total[group] += 1;
        let y = set.labels()[i];
        let row = &mut delta[group * (len + 1)..(group + 1) * (len + 1)];
        if y == class {
            row[switch] += 1;
        } else if y == rival {
            row[0] += 1;
            row[switch] -= 1;
        }
    }

    let mut tallies = vec![GroupTally::empty(num_classes, set.num_attributes()); len];
    for group in 0..g {
        let row = &delta[group * (len + 1)..(group + 1) * (len + 1)];
        let mut running = 0i64;
        for (j, tally) in tallies.iter_mut().enumerate() {
            running += row[j];
            tally.total[group] = total[group];
            tally.correct[group] = running as u64;
        }
    }
    tallies
}

/// Tallies with every class in `members` set to each grid value in turn, by
/// direct re-prediction.
pub(crate) fn sweep_members_naive_tallies(
    set: &PredictionSet,
    factors: &[f64],
    members: &[usize],
    grid: &Grid,
) -> Vec<GroupTally> {
    par::map_slice(grid.values(), |&v| {
        let mut f = factors.to_vec();
        for &m in members {
            f[m] = v;
        }
        let preds = predict_with_factors(set, &f);
        tally_predictions(set, &preds)
    })
}

fn check_sweep_args(set: &PredictionSet, base: &ScalingVector, class: usize) -> Result<()> {
    if base.len() != set.num_classes() {
        return Err(Error::DimensionMismatch {
            what: "scaling vector",
            expected: set.num_classes(),
            actual: base.len(),
        });
    }
    if class >= set.num_classes() {
        return Err(Error::invalid(format!("class {class} out of range")));
    }
    Ok(())
}

/// Metrics for every grid value of `class`, others fixed at `base`
/// (incremental evaluation).
pub fn sweep_class(
    set: &PredictionSet,
    base: &ScalingVector,
    class: usize,
    config: &SearchConfig,
) -> Result<Vec<MetricBundle>> {
    check_sweep_args(set, base, class)?;
    let grid = Grid::new(config)?;
    let tallies = sweep_class_tallies(set, base.factors(), class, &grid);
    Ok(par::map_slice(&tallies, MetricBundle::from_tally))
}

/// Same result as [`sweep_class`], computed by re-predicting every sample for
/// every grid value.
pub fn sweep_class_naive(
    set: &PredictionSet,
    base: &ScalingVector,
    class: usize,
    config: &SearchConfig,
) -> Result<Vec<MetricBundle>> {
    check_sweep_args(set, base, class)?;
    let grid = Grid::new(config)?;
    let tallies = sweep_members_naive_tallies(set, base.factors(), &[class], &grid);
    Ok(par::map_slice(&tallies, MetricBundle::from_tally))
}
