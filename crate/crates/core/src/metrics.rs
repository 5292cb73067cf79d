//! Group-wise, unbiased, worst-group, average, balanced and adjusted
//! average accuracy.
//!
//! Groups with no samples are reported as absent and left out of the
//! unbiased mean and the worst-group minimum.

use serde::{Deserialize, Serialize};

use crate::dataset::GroupId;
use crate::error::{Error, Result};

/// Metric a search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    WorstGroup,
    Unbiased,
    Average,
    Balanced,
}

impl Target {
    pub fn value(self, m: &MetricBundle) -> f64 {
        match self {
            Target::WorstGroup => m.worst_group,
            Target::Unbiased => m.unbiased,
            Target::Average => m.average,
            Target::Balanced => m.balanced,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::WorstGroup => "worst_group",
            Target::Unbiased => "unbiased",
            Target::Average => "average",
            Target::Balanced => "balanced",
        }
    }
}

/// Robust-accuracy measure on the vertical axis of the trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustTarget {
    WorstGroup,
    Unbiased,
}

impl RobustTarget {
    pub fn value(self, m: &MetricBundle) -> f64 {
        match self {
            RobustTarget::WorstGroup => m.worst_group,
            RobustTarget::Unbiased => m.unbiased,
        }
    }

    pub fn as_target(self) -> Target {
        match self {
            RobustTarget::WorstGroup => Target::WorstGroup,
            RobustTarget::Unbiased => Target::Unbiased,
        }
    }
}

impl TryFrom<Target> for RobustTarget {
    type Error = Error;

    fn try_from(t: Target) -> Result<Self> {
        match t {
            Target::WorstGroup => Ok(RobustTarget::WorstGroup),
            Target::Unbiased => Ok(RobustTarget::Unbiased),
            other => Err(Error::invalid(format!(
                "{} is not a robust accuracy measure; use worst_group or unbiased",
                other.name()
            ))),
        }
    }
}

/// Per-group sample and hit counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTally {
    num_classes: usize,
    num_attributes: usize,
    pub(crate) total: Vec<u64>,
    pub(crate) correct: Vec<u64>,
}

impl GroupTally {
    pub fn empty(num_classes: usize, num_attributes: usize) -> Self {
        let g = num_classes * num_attributes;
        GroupTally {
            num_classes,
            num_attributes,
            total: vec![0; g],
            correct: vec![0; g],
        }
    }

    pub fn from_predictions(
        preds: &[usize],
        labels: &[usize],
        attributes: &[usize],
        num_classes: usize,
        num_attributes: usize,
    ) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "predictions",
                expected: labels.len(),
                actual: preds.len(),
            });
        }
        if attributes.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "attributes",
                expected: labels.len(),
                actual: attributes.len(),
            });
        }
        let mut tally = GroupTally::empty(num_classes, num_attributes);
        for ((&p, &y), &a) in preds.iter().zip(labels).zip(attributes) {
            if y >= num_classes || a >= num_attributes {
                return Err(Error::invalid(format!(
                    "group ({y}, {a}) outside {num_classes} classes x {num_attributes} attributes"
                )));
            }
            let g = GroupId::new(y, a).index(num_attributes);
            tally.total[g] += 1;
            if p == y {
                tally.correct[g] += 1;
            }
        }
        Ok(tally)
    }

    pub fn num_groups(&self) -> usize {
        self.total.len()
    }

    pub fn group_accuracy(&self) -> Vec<Option<f64>> {
        self.total
            .iter()
            .zip(&self.correct)
            .map(|(&t, &c)| (t > 0).then(|| c as f64 / t as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    /// Row-major over (class, attribute); `None` for groups without samples.
    pub per_group: Vec<Option<f64>>,
    pub unbiased: f64,
    pub worst_group: f64,
    pub average: f64,
    pub balanced: f64,
    pub adjusted_average: Option<f64>,
}

impl MetricBundle {
    pub fn from_tally(tally: &GroupTally) -> Self {
        let per_group = tally.group_accuracy();
        let present: Vec<f64> = per_group.iter().flatten().copied().collect();
        debug_assert!(!present.is_empty());
        let worst_group = present.iter().copied().fold(f64::INFINITY, f64::min);
        let best_group = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // rounding in the sum can nudge the mean just outside [min, max]
        let unbiased =
            (present.iter().sum::<f64>() / present.len() as f64).clamp(worst_group, best_group);

        let n: u64 = tally.total.iter().sum();
        let hits: u64 = tally.correct.iter().sum();
        let average = hits as f64 / n as f64;

        let a = tally.num_attributes;
        let mut class_acc = Vec::with_capacity(tally.num_classes);
        for c in 0..tally.num_classes {
            let t: u64 = tally.total[c * a..(c + 1) * a].iter().sum();
            let k: u64 = tally.correct[c * a..(c + 1) * a].iter().sum();
            if t > 0 {
                class_acc.push(k as f64 / t as f64);
            }
        }
        let balanced = class_acc.iter().sum::<f64>() / class_acc.len() as f64;

        MetricBundle {
            per_group,
            unbiased,
            worst_group,
            average,
            balanced,
            adjusted_average: None,
        }
    }

    pub fn absent_groups(&self) -> Vec<usize> {
        self.per_group
            .iter()
            .enumerate()
            .filter_map(|(g, acc)| acc.is_none().then_some(g))
            .collect()
    }

    pub fn target(&self, target: Target) -> f64 {
        target.value(self)
    }
}

/// Accuracy of every (class, attribute) group; `None` marks an empty group.
pub fn group_accuracy(
    preds: &[usize],
    labels: &[usize],
    attributes: &[usize],
    num_classes: usize,
    num_attributes: usize,
) -> Result<Vec<Option<f64>>> {
    Ok(
        GroupTally::from_predictions(preds, labels, attributes, num_classes, num_attributes)?
            .group_accuracy(),
    )
}

/// Full metric bundle. `group_weights`, when given, must be nonnegative,
/// sum to one, and put no mass on empty groups; the adjusted average is then
/// the weighted mean of group accuracies.
pub fn metric_bundle(
    preds: &[usize],
    labels: &[usize],
    attributes: &[usize],
    num_classes: usize,
    num_attributes: usize,
    group_weights: Option<&[f64]>,
) -> Result<MetricBundle> {
    if labels.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let tally =
        GroupTally::from_predictions(preds, labels, attributes, num_classes, num_attributes)?;
    let mut bundle = MetricBundle::from_tally(&tally);
    let absent = bundle.absent_groups();
    if !absent.is_empty() {
        log::warn!(
            "{} of {} groups have no samples and are excluded",
            absent.len(),
            bundle.per_group.len()
        );
    }
    if let Some(w) = group_weights {
        bundle.adjusted_average = Some(adjusted_average(&bundle.per_group, w)?);
    }
    Ok(bundle)
}

pub fn adjusted_average(per_group: &[Option<f64>], weights: &[f64]) -> Result<f64> {
    if weights.len() != per_group.len() {
        return Err(Error::DimensionMismatch {
            what: "group weights",
            expected: per_group.len(),
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid(
            "group weights must be finite and nonnegative",
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "group weights sum to {total}, not 1"
        )));
    }
    let mut acc = 0.0;
    for (g, (ga, &w)) in per_group.iter().zip(weights).enumerate() {
        match ga {
            Some(v) => acc += w * v,
            None if w > 0.0 => {
                return Err(Error::invalid(format!(
                    "group {g} has weight {w} but no samples"
                )))
            }
            None => {}
        }
    }
    Ok(acc)
}
