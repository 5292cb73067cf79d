#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use robust_scaling::dataset::softmax_rows;
use robust_scaling::PredictionSet;

/// Softmax scores with a label signal, a class-0 bias and uniform noise.
pub fn random_set(rng: &mut ChaCha8Rng, n: usize, c: usize, a: usize) -> PredictionSet {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let attrs: Vec<usize> = (0..n).map(|_| rng.random_range(0..a)).collect();
    let logits = Array2::from_shape_fn((n, c), |(i, k)| {
        let signal = if k == labels[i] { 1.0 } else { 0.0 };
        let bias = if k == 0 { 0.8 } else { 0.0 };
        signal + bias + 2.0 * (rng.random::<f64>() - 0.5)
    });
    PredictionSet::new(softmax_rows(logits.view()), labels, attrs, a, None).unwrap()
}

/// Like [`random_set`] with `d`-dimensional features that drift with the
/// attribute.
pub fn random_set_with_features(
    rng: &mut ChaCha8Rng,
    n: usize,
    c: usize,
    a: usize,
    d: usize,
) -> PredictionSet {
    let set = random_set(rng, n, c, a);
    let attrs = set.attributes().to_vec();
    let features = Array2::from_shape_fn((n, d), |(i, k)| {
        let shift = if k == attrs[i] % d { 2.0 } else { 0.0 };
        shift + rng.random::<f64>() - 0.5
    });
    set.with_features(Some(features)).unwrap()
}

/// Binary scores on a coarse dyadic grid, so many samples tie exactly.
pub fn quantized_set(rng: &mut ChaCha8Rng, n: usize, a: usize) -> PredictionSet {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let attrs: Vec<usize> = (0..n).map(|_| rng.random_range(0..a)).collect();
    let mut scores = Array2::zeros((n, 2));
    for i in 0..n {
        let p1 = rng.random_range(1..8) as f64 / 8.0;
        scores[[i, 0]] = 1.0 - p1;
        scores[[i, 1]] = p1;
    }
    PredictionSet::new(scores, labels, attrs, a, None).unwrap()
}

/// Per-group totals and hits, counted without the library.
pub fn tally(
    preds: &[usize],
    labels: &[usize],
    attrs: &[usize],
    c: usize,
    a: usize,
) -> (Vec<u64>, Vec<u64>) {
    let mut total = vec![0u64; c * a];
    let mut hits = vec![0u64; c * a];
    for ((&p, &y), &t) in preds.iter().zip(labels).zip(attrs) {
        total[y * a + t] += 1;
        if p == y {
            hits[y * a + t] += 1;
        }
    }
    (total, hits)
}
