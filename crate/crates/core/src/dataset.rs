//! The evaluation payload: per-sample class scores, labels, spurious
//! attributes and optional feature embeddings.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows of `scores` must sum to one within this tolerance.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A (class, attribute) pair. Groups are enumerated row-major, so the flat
/// index is `class * num_attributes + attribute`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupId {
    pub class: usize,
    pub attribute: usize,
}

impl GroupId {
    pub fn new(class: usize, attribute: usize) -> Self {
        GroupId { class, attribute }
    }

    pub fn index(self, num_attributes: usize) -> usize {
        self.class * num_attributes + self.attribute
    }

    pub fn from_index(index: usize, num_attributes: usize) -> Self {
        GroupId {
            class: index / num_attributes,
            attribute: index % num_attributes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    scores: Array2<f64>,
    labels: Vec<usize>,
    attributes: Vec<usize>,
    num_attributes: usize,
    features: Option<Array2<f64>>,
}

impl PredictionSet {
    /// Validates every invariant: simplex rows, label and attribute ranges,
    /// feature row count, `C >= 2`, `n >= 1`, `A >= 1`.
    pub fn new(
        scores: Array2<f64>,
        labels: Vec<usize>,
        attributes: Vec<usize>,
        num_attributes: usize,
        features: Option<Array2<f64>>,
    ) -> Result<Self> {
        let (n, c) = scores.dim();
        if n == 0 {
            return Err(Error::invalid("prediction set has no samples"));
        }
        if c < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {c}")));
        }
        if num_attributes == 0 {
            return Err(Error::invalid("need at least 1 attribute value"));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: n,
                actual: labels.len(),
            });
        }
        if attributes.len() != n {
            return Err(Error::DimensionMismatch {
                what: "attributes",
                expected: n,
                actual: attributes.len(),
            });
        }
        for (i, row) in scores.outer_iter().enumerate() {
            check_simplex_row(row)
                .map_err(|msg| Error::invalid(format!("scores row {i}: {msg}")))?;
        }
        if let Some(i) = labels.iter().position(|&y| y >= c) {
            return Err(Error::invalid(format!(
                "label {} at sample {i} is out of range for {c} classes",
                labels[i]
            )));
        }
        if let Some(i) = attributes.iter().position(|&a| a >= num_attributes) {
            return Err(Error::invalid(format!(
                "attribute {} at sample {i} is out of range for {num_attributes} attribute values",
                attributes[i]
            )));
        }
        if let Some(f) = &features {
            if f.nrows() != n {
                return Err(Error::DimensionMismatch {
                    what: "feature rows",
                    expected: n,
                    actual: f.nrows(),
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("features contain non-finite values"));
            }
        }
        Ok(PredictionSet {
            scores,
            labels,
            attributes,
            num_attributes,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.scores.ncols()
    }

    pub fn num_attributes(&self) -> usize {
        self.num_attributes
    }

    pub fn num_groups(&self) -> usize {
        self.num_classes() * self.num_attributes
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|f| f.ncols())
    }

    pub fn scores(&self) -> ArrayView2<'_, f64> {
        self.scores.view()
    }

    pub fn score_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.scores.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn attributes(&self) -> &[usize] {
        &self.attributes
    }

    pub fn features(&self) -> Option<ArrayView2<'_, f64>> {
        self.features.as_ref().map(|f| f.view())
    }

    pub fn require_features(&self) -> Result<ArrayView2<'_, f64>> {
        self.features()
            .ok_or_else(|| Error::invalid("prediction set has no feature embeddings"))
    }

    pub fn group_of(&self, i: usize) -> GroupId {
        GroupId::new(self.labels[i], self.attributes[i])
    }

    /// Widens the attribute range, e.g. to align a test split with its
    /// validation split.
    pub fn with_num_attributes(mut self, num_attributes: usize) -> Result<Self> {
        if num_attributes < self.num_attributes {
            return Err(Error::invalid(format!(
                "cannot shrink attribute range from {} to {num_attributes}",
                self.num_attributes
            )));
        }
        self.num_attributes = num_attributes;
        Ok(self)
    }

    pub fn with_features(self, features: Option<Array2<f64>>) -> Result<Self> {
        PredictionSet::new(
            self.scores,
            self.labels,
            self.attributes,
            self.num_attributes,
            features,
        )
    }

    /// Same set with every score row replaced; rows must stay on the simplex.
    pub fn with_scores(&self, scores: Array2<f64>) -> Result<Self> {
        if scores.dim() != self.scores.dim() {
            return Err(Error::invalid("replacement scores change the shape"));
        }
        PredictionSet::new(
            scores,
            self.labels.clone(),
            self.attributes.clone(),
            self.num_attributes,
            self.features.clone(),
        )
    }

    /// Rows at `indices`, in that order. Class and attribute ranges are kept.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("empty subset"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("subset index {bad} out of range")));
        }
        Ok(PredictionSet {
            scores: self.scores.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            attributes: indices.iter().map(|&i| self.attributes[i]).collect(),
            num_attributes: self.num_attributes,
            features: self.features.as_ref().map(|f| f.select(Axis(0), indices)),
        })
    }

    /// Plain per-row argmax, ties to the lowest class index.
    pub fn argmax_predictions(&self) -> Vec<usize> {
        self.scores.outer_iter().map(argmax_row).collect()
    }

    /// Number of distinct classes among the labels.
    pub fn distinct_labels(&self) -> usize {
        let mut seen = vec![false; self.num_classes()];
        for &y in &self.labels {
            seen[y] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }
}

pub(crate) fn argmax_row(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    let mut best_value = row[0];
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > best_value {
            best = c;
            best_value = v;
        }
    }
    best
}

fn check_simplex_row(row: ArrayView1<'_, f64>) -> std::result::Result<(), String> {
    if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(format!("entry {v} is negative or non-finite"));
    }
    let sum: f64 = row.sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_off_simplex_rows() {
        let err = PredictionSet::new(array![[0.7, 0.4]], vec![0], vec![0], 1, None).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        let err = PredictionSet::new(array![[1.2, -0.2]], vec![0], vec![0], 1, None).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn rejects_out_of_range_labels_and_attributes() {
        assert!(PredictionSet::new(array![[0.5, 0.5]], vec![2], vec![0], 1, None).is_err());
        assert!(PredictionSet::new(array![[0.5, 0.5]], vec![1], vec![1], 1, None).is_err());
    }

    #[test]
    fn rejects_single_class_and_feature_row_mismatch() {
        assert!(PredictionSet::new(array![[1.0]], vec![0], vec![0], 1, None).is_err());
        let err = PredictionSet::new(
            array![[0.5, 0.5]],
            vec![0],
            vec![0],
            1,
            Some(array![[1.0], [2.0]]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn group_index_is_row_major() {
        assert_eq!(GroupId::new(1, 2).index(3), 5);
        assert_eq!(GroupId::from_index(5, 3), GroupId::new(1, 2));
    }

    #[test]
    fn subset_keeps_ranges() {
        let set = PredictionSet::new(
            array![[0.6, 0.4], [0.3, 0.7], [0.5, 0.5]],
            vec![0, 1, 1],
            vec![0, 2, 1],
            3,
            Some(array![[1.0], [2.0], [3.0]]),
        )
        .unwrap();
        let sub = set.subset(&[2, 0]).unwrap();
        assert_eq!(sub.labels(), &[1, 0]);
        assert_eq!(sub.num_attributes(), 3);
        assert_eq!(sub.features().unwrap()[[0, 0]], 3.0);
        assert_eq!(sub.argmax_predictions(), vec![0, 0]);
    }
}
