//! Attribute-specific robust scaling: one scaling vector per value of the
//! spurious attribute, fitted on the validation partitions, and a linear
//! attribute estimator that routes test samples to a partition.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::irs::{members_by, route_predictions};
use crate::dataset::PredictionSet;
use crate::error::{Error, Result};
use crate::metrics::Target;
use crate::scaling::{ScalingVector, SearchConfig};
use crate::synth::{train_linear, LinearModel, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Share of samples whose attribute label the estimator may see.
    pub labeled_fraction: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            epochs: 500,
            learning_rate: 0.1,
            labeled_fraction: 1.0,
            seed: 0,
        }
    }
}

/// Multinomial linear classifier from features to attribute values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEstimator {
    pub model: LinearModel,
    pub config: EstimatorConfig,
    /// Accuracy on the labeled samples it was trained on.
    pub train_accuracy: f64,
    pub labeled_samples: usize,
}

impl AttributeEstimator {
    /// Wraps given parameters (`d x A` weights, length-`A` bias).
    pub fn from_parameters(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.ncols() != bias.len() || bias.is_empty() {
            return Err(Error::invalid(
                "estimator weights and bias disagree on the attribute count",
            ));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("estimator parameters must be finite"));
        }
        Ok(AttributeEstimator {
            model: LinearModel {
                weights,
                bias,
                loss_history: Vec::new(),
            },
            config: EstimatorConfig::default(),
            train_accuracy: f64::NAN,
            labeled_samples: 0,
        })
    }

    pub fn num_attributes(&self) -> usize {
        self.model.num_classes()
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        self.model.predict(features)
    }
}

pub fn fit_attribute_estimator(
    features: ArrayView2<'_, f64>,
    attributes: &[usize],
    num_attributes: usize,
    config: &EstimatorConfig,
) -> Result<AttributeEstimator> {
    let n = features.nrows();
    if attributes.len() != n {
        return Err(Error::DimensionMismatch {
            what: "attributes",
            expected: n,
            actual: attributes.len(),
        });
    }
    if !(config.labeled_fraction > 0.0 && config.labeled_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "labeled fraction {} must be in (0, 1]",
            config.labeled_fraction
        )));
    }
    let mut labeled: Vec<usize> = (0..n).collect();
    if config.labeled_fraction < 1.0 {
        let m = ((n as f64 * config.labeled_fraction).round() as usize).clamp(1, n);
        labeled.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
        labeled.truncate(m);
        labeled.sort_unstable();
    }
    let mut seen = vec![0usize; num_attributes];
    for &i in &labeled {
        let a = attributes[i];
        if a >= num_attributes {
            return Err(Error::invalid(format!("attribute {a} out of range")));
        }
        seen[a] += 1;
    }
    if let Some(a) = seen.iter().position(|&k| k == 0) {
        return Err(Error::invalid(format!(
            "attribute value {a} has no labeled samples"
        )));
    }

    let x = features.select(ndarray::Axis(0), &labeled);
    let y: Vec<usize> = labeled.iter().map(|&i| attributes[i]).collect();
    let model = train_linear(
        x.view(),
        &y,
        num_attributes,
        None,
        &TrainConfig {
            epochs: config.epochs,
            learning_rate: config.learning_rate,
            seed: config.seed,
        },
    )?;
    let pred = model.predict(x.view())?;
    let hits = pred.iter().zip(&y).filter(|(p, t)| p == t).count();
    Ok(AttributeEstimator {
        model,
        config: config.clone(),
        train_accuracy: hits as f64 / y.len() as f64,
        labeled_samples: y.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeScalingModel {
    pub estimator: AttributeEstimator,
    pub per_attribute_scaling: Vec<ScalingVector>,
    pub target: Target,
}

impl AttributeScalingModel {
    pub fn new(
        estimator: AttributeEstimator,
        per_attribute_scaling: Vec<ScalingVector>,
        target: Target,
    ) -> Result<Self> {
        if per_attribute_scaling.len() != estimator.num_attributes() {
            return Err(Error::DimensionMismatch {
                what: "per-attribute scalings",
                expected: estimator.num_attributes(),
                actual: per_attribute_scaling.len(),
            });
        }
        Ok(AttributeScalingModel {
            estimator,
            per_attribute_scaling,
            target,
        })
    }
}

/// One greedy search per true-attribute partition of `val`; empty
/// partitions keep the identity.
pub fn ars_scalings(val: &PredictionSet, config: &SearchConfig) -> Result<Vec<ScalingVector>> {
    let members = members_by(val.attributes(), val.num_attributes());
    super::irs::search_per_subset(val, &members, config, 1)
}

pub fn ars_fit(
    val: &PredictionSet,
    config: &SearchConfig,
    estimator: &EstimatorConfig,
) -> Result<AttributeScalingModel> {
    let features = val.require_features()?;
    let scalings = ars_scalings(val, config)?;
    let estimator =
        fit_attribute_estimator(features, val.attributes(), val.num_attributes(), estimator)?;
    AttributeScalingModel::new(estimator, scalings, config.target)
}

pub fn ars_predict(test: &PredictionSet, model: &AttributeScalingModel) -> Result<Vec<usize>> {
    let attrs = model.estimator.predict(test.require_features()?)?;
    route_predictions(test, &attrs, &model.per_attribute_scaling)
}
