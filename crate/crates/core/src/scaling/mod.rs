//! Class-specific score scaling: predict `argmax_c s_c * p_c`, and search
//! the multiplicative grid `base^n` for the vector `s` that maximizes a
//! robustness target on a validation split.

mod pool;
mod search;
pub mod sweep;

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::dataset::PredictionSet;
use crate::error::{Error, Result};
use crate::metrics::{GroupTally, MetricBundle, Target};
use crate::par;

pub use pool::{PoolPoint, Provenance, TradeoffPool};
pub use search::{
    class_signatures, derive_superclasses, full_grid_search, greedy_search, superclass_search,
    SearchResult,
};

/// `base^n` by square-and-multiply. Every grid factor in the crate goes
/// through this one function so that exponents can be recovered from factors
/// bit-exactly. `powi` is avoided: its result may differ between constant
/// folding and runtime evaluation.
pub fn grid_value(base: f64, exponent: i32) -> f64 {
    let mut result = 1.0;
    let mut square = base;
    let mut e = exponent.unsigned_abs();
    while e > 0 {
        if e & 1 == 1 {
            result *= square;
        }
        square *= square;
        e >>= 1;
    }
    if exponent < 0 {
        1.0 / result
    } else {
        result
    }
}

/// Exponents of an on-grid vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCoords {
    pub base: f64,
    pub exponents: Vec<i32>,
}

/// Per-class multipliers, all strictly positive. The all-ones vector leaves
/// predictions unchanged.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ScalingRepr", into = "ScalingRepr")]
pub struct ScalingVector {
    factors: Vec<f64>,
    grid: Option<GridCoords>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScalingRepr {
    Grid { base: f64, exponents: Vec<i32> },
    Raw { factors: Vec<f64> },
}

impl TryFrom<ScalingRepr> for ScalingVector {
    type Error = Error;

    fn try_from(r: ScalingRepr) -> Result<Self> {
        match r {
            ScalingRepr::Grid { base, exponents } => {
                ScalingVector::from_exponents(base, &exponents)
            }
            ScalingRepr::Raw { factors } => ScalingVector::new(factors),
        }
    }
}

impl From<ScalingVector> for ScalingRepr {
    fn from(s: ScalingVector) -> Self {
        match s.grid {
            Some(GridCoords { base, exponents }) => ScalingRepr::Grid { base, exponents },
            None => ScalingRepr::Raw { factors: s.factors },
        }
    }
}

impl PartialEq for ScalingVector {
    fn eq(&self, other: &Self) -> bool {
        self.factors == other.factors
    }
}

impl ScalingVector {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("scaling vector is empty"));
        }
        if let Some(f) = factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::invalid(format!(
                "scaling factor {f} is not strictly positive"
            )));
        }
        Ok(ScalingVector {
            factors,
            grid: None,
        })
    }

    pub fn identity(num_classes: usize) -> Self {
        ScalingVector::from_exponents(1.05, &vec![0; num_classes]).expect("valid identity")
    }

    pub fn from_exponents(base: f64, exponents: &[i32]) -> Result<Self> {
        if !(base.is_finite() && base > 1.0) {
            return Err(Error::invalid(format!("grid base {base} must exceed 1")));
        }
        let factors: Vec<f64> = exponents.iter().map(|&n| grid_value(base, n)).collect();
        let mut s = ScalingVector::new(factors)?;
        s.grid = Some(GridCoords {
            base,
            exponents: exponents.to_vec(),
        });
        Ok(s)
    }

    /// Recovers grid coordinates when every factor is exactly `base^n`.
    pub fn snapped_to(mut self, base: f64) -> Self {
        if self.grid.is_some() {
            return self;
        }
        let ln_base = base.ln();
        let exponents: Option<Vec<i32>> = self
            .factors
            .iter()
            .map(|&f| {
                let n = (f.ln() / ln_base).round();
                (n.abs() < i32::MAX as f64 && grid_value(base, n as i32) == f).then_some(n as i32)
            })
            .collect();
        if let Some(exponents) = exponents {
            self.grid = Some(GridCoords { base, exponents });
        }
        self
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn grid(&self) -> Option<&GridCoords> {
        self.grid.as_ref()
    }

    pub fn exponents(&self) -> Option<&[i32]> {
        self.grid.as_ref().map(|g| g.exponents.as_slice())
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.factors.iter().all(|&f| f == 1.0)
    }

    /// `lambda * s`; grid coordinates are dropped.
    pub fn rescaled(&self, lambda: f64) -> Result<Self> {
        ScalingVector::new(self.factors.iter().map(|f| f * lambda).collect())
    }

    /// Key identifying the vector up to uniform positive rescaling: exponent
    /// offsets from class 0 on the grid, otherwise factor ratios to class 0.
    pub fn canonical_key(&self) -> CanonicalKey {
        match &self.grid {
            Some(g) => CanonicalKey::Grid {
                base_bits: g.base.to_bits(),
                offsets: g.exponents.iter().map(|e| e - g.exponents[0]).collect(),
            },
            None => CanonicalKey::Raw(
                self.factors
                    .iter()
                    .map(|f| (f / self.factors[0]).to_bits())
                    .collect(),
            ),
        }
    }

    /// Canonical factors, i.e. divided by the class-0 factor.
    pub fn canonical_factors(&self) -> Vec<f64> {
        match &self.grid {
            Some(g) => g
                .exponents
                .iter()
                .map(|e| grid_value(g.base, e - g.exponents[0]))
                .collect(),
            None => self.factors.iter().map(|f| f / self.factors[0]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum CanonicalKey {
    Grid { base_bits: u64, offsets: Vec<i32> },
    Raw(Vec<u64>),
}

impl Hash for CanonicalKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            CanonicalKey::Grid { base_bits, offsets } => {
                0u8.hash(state);
                base_bits.hash(state);
                offsets.hash(state);
            }
            CanonicalKey::Raw(bits) => {
                1u8.hash(state);
                bits.hash(state);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub grid_base: f64,
    pub min_exponent: i32,
    pub max_exponent: i32,
    pub target: Target,
    /// Sweep order; `None` means ascending class index.
    pub class_order: Option<Vec<usize>>,
    pub passes: usize,
    /// Refuse exhaustive searches above this many evaluations.
    pub max_evaluations: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            grid_base: 1.05,
            min_exponent: -200,
            max_exponent: 200,
            target: Target::Unbiased,
            class_order: None,
            passes: 1,
            max_evaluations: 10_000_000,
        }
    }
}

impl SearchConfig {
    pub fn with_target(mut self, target: Target) -> Self {
        self.target = target;
        self
    }

    pub fn with_range(mut self, min_exponent: i32, max_exponent: i32) -> Self {
        self.min_exponent = min_exponent;
        self.max_exponent = max_exponent;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_base.is_finite() && self.grid_base > 1.0) {
            return Err(Error::invalid(format!(
                "grid base {} must exceed 1",
                self.grid_base
            )));
        }
        if self.min_exponent > 0 || self.max_exponent < 0 {
            return Err(Error::invalid(format!(
                "exponent range [{}, {}] must contain 0",
                self.min_exponent, self.max_exponent
            )));
        }
        if self.passes == 0 {
            return Err(Error::invalid("passes must be positive"));
        }
        Ok(())
    }

    pub(crate) fn class_order(&self, num_classes: usize) -> Result<Vec<usize>> {
        match &self.class_order {
            None => Ok((0..num_classes).collect()),
            Some(order) => {
                let mut seen = vec![false; num_classes];
                for &c in order {
                    if c >= num_classes || seen[c] {
                        return Err(Error::invalid(format!(
                            "class order {order:?} is not a permutation of 0..{num_classes}"
                        )));
                    }
                    seen[c] = true;
                }
                if order.len() != num_classes {
                    return Err(Error::invalid(format!(
                        "class order {order:?} is not a permutation of 0..{num_classes}"
                    )));
                }
                Ok(order.clone())
            }
        }
    }
}

/// Candidate factors of one class, ascending in exponent.
#[derive(Debug, Clone)]
pub struct Grid {
    base: f64,
    min_exponent: i32,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(config: &SearchConfig) -> Result<Self> {
        config.validate()?;
        let values = (config.min_exponent..=config.max_exponent)
            .map(|n| grid_value(config.grid_base, n))
            .collect();
        Ok(Grid {
            base: config.grid_base,
            min_exponent: config.min_exponent,
            values,
        })
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn exponent(&self, index: usize) -> i32 {
        self.min_exponent + index as i32
    }

    pub fn exponents(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.len()).map(|j| self.exponent(j))
    }
}

/// `base^n` for every exponent in the configured range, ascending.
pub fn grid_values(config: &SearchConfig) -> Result<Vec<f64>> {
    Ok(Grid::new(config)?.values)
}

/// `argmax_c s_c * p_ic` per sample, ties to the lowest class index.
pub fn scaled_predict(set: &PredictionSet, s: &ScalingVector) -> Result<Vec<usize>> {
    if s.len() != set.num_classes() {
        return Err(Error::DimensionMismatch {
            what: "scaling vector",
            expected: set.num_classes(),
            actual: s.len(),
        });
    }
    Ok(predict_with_factors(set, s.factors()))
}

pub(crate) fn predict_with_factors(set: &PredictionSet, factors: &[f64]) -> Vec<usize> {
    let scores = set.scores();
    par::map_range(set.len(), |i| {
        let row = scores.row(i);
        let mut best = 0;
        let mut best_value = factors[0] * row[0];
        for c in 1..factors.len() {
            let v = factors[c] * row[c];
            if v > best_value {
                best = c;
                best_value = v;
            }
        }
        best
    })
}

pub(crate) fn tally_predictions(set: &PredictionSet, preds: &[usize]) -> GroupTally {
    GroupTally::from_predictions(
        preds,
        set.labels(),
        set.attributes(),
        set.num_classes(),
        set.num_attributes(),
    )
    .expect("prediction set invariants guarantee a valid tally")
}

/// Metric bundle of `set` under scaling `s`.
pub fn evaluate(set: &PredictionSet, s: &ScalingVector) -> Result<MetricBundle> {
    let preds = scaled_predict(set, s)?;
    Ok(MetricBundle::from_tally(&tally_predictions(set, &preds)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single(scores: ndarray::Array2<f64>) -> PredictionSet {
        let n = scores.nrows();
        PredictionSet::new(scores, vec![0; n], vec![0; n], 1, None).unwrap()
    }

    #[test]
    fn identity_scaling_keeps_argmax() {
        let set = single(array![[0.6, 0.4]]);
        assert_eq!(
            scaled_predict(&set, &ScalingVector::identity(2)).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn upweighting_flips_prediction() {
        let set = single(array![[0.6, 0.4]]);
        let s = ScalingVector::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(scaled_predict(&set, &s).unwrap(), vec![1]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let set = single(array![[0.5, 0.5]]);
        assert_eq!(
            scaled_predict(&set, &ScalingVector::identity(2)).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let set = single(array![[0.5, 0.5]]);
        assert!(matches!(
            scaled_predict(&set, &ScalingVector::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nonpositive_factors_are_rejected() {
        assert!(ScalingVector::new(vec![1.0, 0.0]).is_err());
        assert!(ScalingVector::new(vec![1.0, -2.0]).is_err());
        assert!(ScalingVector::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let values = grid_values(&SearchConfig::default()).unwrap();
        assert_eq!(values.len(), 401);
        assert_eq!(values[200], 1.0);
        // 1.05^200 = exp(200 ln 1.05) = 17292.58...
        let expected = (200.0 * 1.05f64.ln()).exp();
        assert!((values[400] - expected).abs() / expected < 1e-12);
        assert!((values[400] - 1.7293e4).abs() < 1.0);
        assert!(values.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn range_must_contain_zero() {
        let bad = SearchConfig::default().with_range(1, 5);
        assert!(grid_values(&bad).is_err());
        let bad = SearchConfig {
            grid_base: 1.0,
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn snapping_recovers_exponents() {
        let s = ScalingVector::new(vec![grid_value(1.05, -3), 1.0, grid_value(1.05, 17)])
            .unwrap()
            .snapped_to(1.05);
        assert_eq!(s.exponents(), Some(&[-3, 0, 17][..]));
        let off = ScalingVector::new(vec![1.0, 1.01])
            .unwrap()
            .snapped_to(1.05);
        assert_eq!(off.exponents(), None);
    }

    #[test]
    fn canonical_key_ignores_uniform_shift() {
        let a = ScalingVector::from_exponents(1.05, &[0, 4]).unwrap();
        let b = ScalingVector::from_exponents(1.05, &[-3, 1]).unwrap();
        assert_eq!(a.canonical_key(), b.canonical_key());
        let c = ScalingVector::from_exponents(1.05, &[0, 5]).unwrap();
        assert_ne!(a.canonical_key(), c.canonical_key());
    }

    #[test]
    fn class_order_must_be_permutation() {
        let mut cfg = SearchConfig {
            class_order: Some(vec![1, 1]),
            ..SearchConfig::default()
        };
        assert!(cfg.class_order(2).is_err());
        cfg.class_order = Some(vec![1, 0]);
        assert_eq!(cfg.class_order(2).unwrap(), vec![1, 0]);
    }
}
