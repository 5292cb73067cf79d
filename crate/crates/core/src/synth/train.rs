//! Multinomial logistic regression trained by full-batch gradient descent on
//! (optionally sample-weighted) softmax cross-entropy.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{argmax_row, softmax_rows};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// `d x C`
    #[serde(with = "crate::serde_array::matrix")]
    pub weights: Array2<f64>,
    #[serde(with = "crate::serde_array::vector")]
    pub bias: Array1<f64>,
    /// Training loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl LinearModel {
    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn logits(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "feature dimension",
                expected: self.dim(),
                actual: features.ncols(),
            });
        }
        Ok(features.dot(&self.weights) + &self.bias)
    }

    pub fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(self.logits(features)?.view()))
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(self
            .logits(features)?
            .outer_iter()
            .map(argmax_row)
            .collect())
    }
}

/// Weighted mean cross-entropy and its gradient with respect to
/// `(weights, bias)`. `sample_weights` must already be normalized by the
/// caller as it likes; the loss divides by their sum.
pub fn loss_and_gradient(
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    sample_weights: &[f64],
) -> (f64, Array2<f64>, Array1<f64>) {
    let logits = features.dot(weights) + bias;
    let mut probs = softmax_rows(logits.view());
    let total: f64 = sample_weights.iter().sum();
    let mut loss = 0.0;
    for (i, mut row) in probs.outer_iter_mut().enumerate() {
        let y = labels[i];
        let w = sample_weights[i] / total;
        // log-sum-exp form keeps the loss finite when p_y underflows
        let z = logits.row(i);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += w * (lse - z[y]);
        row[y] -= 1.0;
        row.mapv_inplace(|v| v * w);
    }
    let grad_w = features.t().dot(&probs);
    let grad_b = probs.sum_axis(Axis(0));
    (loss, grad_w, grad_b)
}

/// Scales weights so the largest is exactly 1.
fn normalized_weights(n: usize, sample_weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match sample_weights {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "sample weights",
                    expected: n,
                    actual: w.len(),
                });
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid(
                    "sample weights must be finite and nonnegative",
                ));
            }
            let max = w.iter().copied().fold(0.0, f64::max);
            if max <= 0.0 {
                return Err(Error::invalid("sample weights sum to zero"));
            }
            Ok(w.iter().map(|v| v / max).collect())
        }
    }
}

/// Gradient descent; a step that would raise the loss is retried with half
/// the step size, so the recorded loss never increases.
pub fn train_linear(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    sample_weights: Option<&[f64]>,
    config: &TrainConfig,
) -> Result<LinearModel> {
    let (n, d) = features.dim();
    if n == 0 {
        return Err(Error::invalid("no training samples"));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: n,
            actual: labels.len(),
        });
    }
    if let Some(y) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::invalid(format!(
            "label {y} out of range for {num_classes} classes"
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features contain non-finite values"));
    }
    let sw = normalized_weights(n, sample_weights)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut weights = Array2::from_shape_fn((d, num_classes), |_| init.sample(&mut rng));
    let mut bias = Array1::zeros(num_classes);

    let (mut loss, mut grad_w, mut grad_b) =
        loss_and_gradient(&weights, &bias, features, labels, &sw);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut step = config.learning_rate;
        for _ in 0..40 {
            let cand_w = &weights - &(&grad_w * step);
            let cand_b = &bias - &(&grad_b * step);
            let (cand_loss, gw, gb) = loss_and_gradient(&cand_w, &cand_b, features, labels, &sw);
            if !cand_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            if cand_loss <= loss {
                weights = cand_w;
                bias = cand_b;
                loss = cand_loss;
                grad_w = gw;
                grad_b = gb;
                break;
            }
            step *= 0.5;
        }
        history.push(loss);
    }
    Ok(LinearModel {
        weights,
        bias,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn separable(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0; n];
        for i in 0..n {
            let cls = i % 2;
            let sign = if cls == 0 { -1.0 } else { 1.0 };
            x[[i, 0]] = sign * (1.0 + rng.random::<f64>());
            x[[i, 1]] = rng.random::<f64>() - 0.5;
            y[i] = cls;
        }
        (x, y)
    }

    #[test]
    fn separable_data_is_learned() {
        let (x, y) = separable(200, 1);
        let model = train_linear(x.view(), &y, 2, None, &TrainConfig::default()).unwrap();
        let pred = model.predict(x.view()).unwrap();
        let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 200.0;
        assert!(acc >= 0.99);
        assert!(model.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn uniform_weights_match_unweighted() {
        let (x, y) = separable(60, 2);
        let cfg = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let a = train_linear(x.view(), &y, 2, None, &cfg).unwrap();
        let b = train_linear(x.view(), &y, 2, Some(&vec![3.7; 60]), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weight_errors() {
        let (x, y) = separable(4, 3);
        let cfg = TrainConfig::default();
        assert!(train_linear(x.view(), &y, 2, Some(&[0.0; 4]), &cfg).is_err());
        assert!(train_linear(x.view(), &y, 2, Some(&[1.0, -1.0, 1.0, 1.0]), &cfg).is_err());
        assert!(train_linear(x.view(), &y, 2, Some(&[1.0; 3]), &cfg).is_err());
    }

    #[test]
    fn zero_weight_samples_are_ignored() {
        let x = array![[1.0], [-1.0], [5.0]];
        let y = vec![1, 0, 0];
        let cfg = TrainConfig {
            epochs: 200,
            ..TrainConfig::default()
        };
        let model = train_linear(x.view(), &y, 2, Some(&[1.0, 1.0, 0.0]), &cfg).unwrap();
        assert_eq!(model.predict(x.view()).unwrap()[..2], [1, 0]);
    }
}
