//! Synthetic spurious-correlation data, a linear softmax trainer, and the
//! class/group reweighting and subsampling baselines.
//!
//! Features are `class_separation * e(y) + attribute_leakage * e'(a) + noise`
//! with one-hot, mutually orthogonal `e` and `e'`. The attribute matches the
//! class-aligned value `y mod A` with probability `rho`, otherwise it is
//! uniform over the remaining values. When the attribute direction is
//! stronger than the class direction, an ERM model leans on the attribute
//! and the minority groups suffer.

mod train;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::PredictionSet;
use crate::error::{Error, Result};

pub use train::{loss_and_gradient, train_linear, LinearModel, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub num_classes: usize,
    pub num_attributes: usize,
    /// Class prior; empty means uniform.
    pub class_proportions: Vec<f64>,
    pub rho: f64,
    pub class_separation: f64,
    pub attribute_leakage: f64,
    pub noise_sigma: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig::biased()
    }
}

impl SyntheticConfig {
    /// Binary task with a rare positive class, binary attribute, and an
    /// attribute direction stronger than the class direction. The rare
    /// class's minority group is the one an ERM model fails on.
    pub fn biased() -> Self {
        SyntheticConfig {
            n_train: 5000,
            n_val: 20000,
            n_test: 20000,
            num_classes: 2,
            num_attributes: 2,
            class_proportions: vec![0.85, 0.15],
            rho: 0.95,
            class_separation: 1.5,
            attribute_leakage: 2.0,
            noise_sigma: 1.0,
            dim: 8,
            seed: 0,
        }
    }

    /// Balanced classes whose minority groups sit in opposite attribute
    /// modes. A single scaling vector cannot help both; per-mode vectors can.
    pub fn two_modal() -> Self {
        SyntheticConfig {
            class_proportions: Vec::new(),
            class_separation: 1.5,
            attribute_leakage: 5.0,
            dim: 4,
            ..SyntheticConfig::biased()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::invalid("split sizes must be positive"));
        }
        if self.num_classes < 2 || self.num_attributes == 0 {
            return Err(Error::invalid(
                "need at least 2 classes and 1 attribute value",
            ));
        }
        let lo = 1.0 / self.num_attributes as f64;
        if !(self.rho >= lo - 1e-12 && self.rho <= 1.0) {
            return Err(Error::invalid(format!(
                "rho {} outside [{lo}, 1]",
                self.rho
            )));
        }
        if self.dim < 2 || self.dim < self.num_classes + self.num_attributes {
            return Err(Error::invalid(format!(
                "dimension {} cannot hold {} orthogonal class and attribute directions",
                self.dim,
                self.num_classes + self.num_attributes
            )));
        }
        if !self.class_proportions.is_empty() {
            if self.class_proportions.len() != self.num_classes {
                return Err(Error::DimensionMismatch {
                    what: "class proportions",
                    expected: self.num_classes,
                    actual: self.class_proportions.len(),
                });
            }
            if self
                .class_proportions
                .iter()
                .any(|p| !p.is_finite() || *p <= 0.0)
            {
                return Err(Error::invalid(
                    "class proportions must be positive and finite",
                ));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn aligned_attribute(&self, class: usize) -> usize {
        class % self.num_attributes
    }
}

/// A split without scores: features plus class and attribute labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub attributes: Vec<usize>,
    pub num_classes: usize,
    pub num_attributes: usize,
}

impl LabeledSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn into_prediction_set(self, scores: Array2<f64>) -> Result<PredictionSet> {
        PredictionSet::new(
            scores,
            self.labels,
            self.attributes,
            self.num_attributes,
            Some(self.features),
        )
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSplit {
        LabeledSplit {
            features: self.features.select(ndarray::Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            attributes: indices.iter().map(|&i| self.attributes[i]).collect(),
            num_classes: self.num_classes,
            num_attributes: self.num_attributes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: LabeledSplit,
    pub val: LabeledSplit,
    pub test: LabeledSplit,
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train = generate_split(config, config.n_train, &mut rng);
    let val = generate_split(config, config.n_val, &mut rng);
    let test = generate_split(config, config.n_test, &mut rng);
    Ok(SyntheticData { train, val, test })
}

fn generate_split(config: &SyntheticConfig, n: usize, rng: &mut ChaCha8Rng) -> LabeledSplit {
    let noise = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
    let (c, a) = (config.num_classes, config.num_attributes);
    let prior = if config.class_proportions.is_empty() {
        WeightedIndex::new(vec![1.0; c])
    } else {
        WeightedIndex::new(&config.class_proportions)
    }
    .expect("validated proportions");
    let mut features = Array2::zeros((n, config.dim));
    let mut labels = Vec::with_capacity(n);
    let mut attributes = Vec::with_capacity(n);
    for i in 0..n {
        let y = prior.sample(rng);
        let aligned = config.aligned_attribute(y);
        let attr = if a == 1 || rng.random::<f64>() < config.rho {
            aligned
        } else {
            let k = rng.random_range(0..a - 1);
            if k >= aligned {
                k + 1
            } else {
                k
            }
        };
        let mut row = features.row_mut(i);
        for v in row.iter_mut() {
            *v = noise.sample(rng);
        }
        row[y] += config.class_separation;
        row[c + attr] += config.attribute_leakage;
        labels.push(y);
        attributes.push(attr);
    }
    LabeledSplit {
        features,
        labels,
        attributes,
        num_classes: c,
        num_attributes: a,
    }
}

/// `n / count(key_i)` as an exact fraction `(n, count)` per sample.
pub fn inverse_frequency_fractions<K: Ord + Copy>(keys: &[K]) -> Vec<(u64, u64)> {
    let mut counts: BTreeMap<K, u64> = BTreeMap::new();
    for &k in keys {
        *counts.entry(k).or_default() += 1;
    }
    let n = keys.len() as u64;
    keys.iter().map(|k| (n, counts[k])).collect()
}

/// Inverse class frequency: `w_i = n / #{j : y_j = y_i}`.
pub fn cr_weights(labels: &[usize]) -> Vec<f64> {
    inverse_frequency_fractions(labels)
        .into_iter()
        .map(|(n, k)| n as f64 / k as f64)
        .collect()
}

/// Inverse group frequency over (class, attribute) pairs.
pub fn gr_weights(labels: &[usize], attributes: &[usize]) -> Result<Vec<f64>> {
    if labels.len() != attributes.len() {
        return Err(Error::DimensionMismatch {
            what: "attributes",
            expected: labels.len(),
            actual: attributes.len(),
        });
    }
    let keys: Vec<(usize, usize)> = labels
        .iter()
        .copied()
        .zip(attributes.iter().copied())
        .collect();
    Ok(inverse_frequency_fractions(&keys)
        .into_iter()
        .map(|(n, k)| n as f64 / k as f64)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    /// Equal size per class.
    Class,
    /// Equal size per (class, attribute) group.
    Group,
}

/// Keeps a uniformly random subset of every class or group, all of the size
/// of the smallest one. Returned indices are ascending.
pub fn subsample_balanced(
    labels: &[usize],
    attributes: &[usize],
    mode: BalanceMode,
    seed: u64,
) -> Result<Vec<usize>> {
    if labels.len() != attributes.len() {
        return Err(Error::DimensionMismatch {
            what: "attributes",
            expected: labels.len(),
            actual: attributes.len(),
        });
    }
    let mut buckets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, (&y, &a)) in labels.iter().zip(attributes).enumerate() {
        let key = match mode {
            BalanceMode::Class => (y, 0),
            BalanceMode::Group => (y, a),
        };
        buckets.entry(key).or_default().push(i);
    }
    let keep = buckets.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::with_capacity(keep * buckets.len());
    for mut members in buckets.into_values() {
        members.shuffle(&mut rng);
        kept.extend_from_slice(&members[..keep]);
    }
    kept.sort_unstable();
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(rho: f64, n: usize, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_train: n,
            n_val: 10,
            n_test: 10,
            rho,
            seed,
            ..SyntheticConfig::biased()
        }
    }

    #[test]
    fn cr_weights_formula() {
        let w = cr_weights(&[0, 0, 0, 1]);
        assert_eq!(w, vec![4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 4.0]);
        assert_eq!(cr_weights(&[0, 1, 0, 1, 2, 2]), vec![3.0; 6]);
        assert_eq!(cr_weights(&[1, 1, 1]), vec![1.0; 3]);
    }

    #[test]
    fn gr_weights_formula() {
        assert_eq!(gr_weights(&[0, 1, 0], &[0, 0, 1]).unwrap(), vec![3.0; 3]);
        let w = gr_weights(&[0, 0, 0, 0], &[1, 1, 1, 0]).unwrap();
        assert_eq!(w, vec![4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 4.0]);
        let labels = [0, 1, 1, 2, 0, 0];
        assert_eq!(gr_weights(&labels, &[0; 6]).unwrap(), cr_weights(&labels));
    }

    #[test]
    fn subsample_sizes() {
        let labels: Vec<usize> = [vec![0; 10], vec![1; 2]].concat();
        let kept = subsample_balanced(&labels, &[0; 12], BalanceMode::Class, 1).unwrap();
        assert_eq!(kept.iter().filter(|&&i| labels[i] == 0).count(), 2);
        assert_eq!(kept.iter().filter(|&&i| labels[i] == 1).count(), 2);

        let labels: Vec<usize> = [vec![0; 12], vec![1; 6]].concat();
        let attrs: Vec<usize> = [vec![0; 8], vec![1; 4], vec![0; 4], vec![1; 2]].concat();
        let kept = subsample_balanced(&labels, &attrs, BalanceMode::Group, 2).unwrap();
        assert_eq!(kept.len(), 8);

        let balanced = [0, 1, 0, 1];
        assert_eq!(
            subsample_balanced(&balanced, &[0; 4], BalanceMode::Class, 3).unwrap(),
            vec![0, 1, 2, 3]
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small(0.9, 200, 4)).unwrap();
        let b = generate(&small(0.9, 200, 4)).unwrap();
        assert_eq!(a, b);
        let c = generate(&small(0.9, 200, 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn aligned_fraction_tracks_rho() {
        let cfg = small(0.95, 20_000, 6);
        let data = generate(&cfg).unwrap();
        let aligned = data
            .train
            .labels
            .iter()
            .zip(&data.train.attributes)
            .filter(|(&y, &a)| cfg.aligned_attribute(y) == a)
            .count() as f64
            / 20_000.0;
        // binomial sd is about 0.0015
        assert!((aligned - 0.95).abs() < 0.01, "aligned fraction {aligned}");
    }

    #[test]
    fn independence_at_minimum_rho() {
        let cfg = small(0.5, 20_000, 7);
        let data = generate(&cfg).unwrap();
        let mut joint = [[0.0f64; 2]; 2];
        for (&y, &a) in data.train.labels.iter().zip(&data.train.attributes) {
            joint[y][a] += 1.0 / 20_000.0;
        }
        let py = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
        let pa = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
        let mut mi = 0.0;
        for y in 0..2 {
            for a in 0..2 {
                if joint[y][a] > 0.0 {
                    mi += joint[y][a] * (joint[y][a] / (py[y] * pa[a])).ln();
                }
            }
        }
        assert!(mi < 1e-3, "mutual information {mi}");
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&small(0.2, 10, 0)).is_err());
        let mut cfg = small(0.9, 10, 0);
        cfg.dim = 3;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn config_json_fills_defaults() {
        let cfg: SyntheticConfig = serde_json::from_str(r#"{"rho": 0.8, "seed": 3}"#).unwrap();
        assert_eq!(cfg.rho, 0.8);
        assert_eq!(cfg.n_train, SyntheticConfig::biased().n_train);
    }
}
