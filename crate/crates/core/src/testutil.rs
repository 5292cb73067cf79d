use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{softmax_rows, PredictionSet};

/// Softmax of Gaussian-ish logits with a class-dependent bias, so searches
/// have something to fix.
pub(crate) fn random_prediction_set(
    rng: &mut ChaCha8Rng,
    n: usize,
    c: usize,
    a: usize,
) -> PredictionSet {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let attrs: Vec<usize> = (0..n).map(|_| rng.random_range(0..a)).collect();
    let logits = Array2::from_shape_fn((n, c), |(i, k)| {
        let signal = if k == labels[i] { 1.0 } else { 0.0 };
        let bias = if k == 0 { 0.8 } else { 0.0 };
        signal + bias + 2.0 * (rng.random::<f64>() - 0.5)
    });
    PredictionSet::new(softmax_rows(logits.view()), labels, attrs, a, None).unwrap()
}
