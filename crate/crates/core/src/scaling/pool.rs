use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CanonicalKey, ScalingVector};
use crate::metrics::MetricBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GridSweep,
    GreedyTrajectory,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolPoint {
    pub scaling: ScalingVector,
    pub metrics: MetricBundle,
    pub provenance: Provenance,
}

/// Every (scaling, metrics) pair evaluated during a search, deduplicated up
/// to uniform rescaling of the scaling vector. Insertion order is kept.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "PoolRepr", into = "PoolRepr")]
pub struct TradeoffPool {
    points: Vec<PoolPoint>,
    index: HashMap<CanonicalKey, usize>,
}

#[derive(Serialize, Deserialize)]
struct PoolRepr {
    points: Vec<PoolPoint>,
}

impl From<PoolRepr> for TradeoffPool {
    fn from(r: PoolRepr) -> Self {
        let mut pool = TradeoffPool::new();
        for p in r.points {
            pool.insert(p.scaling, p.metrics, p.provenance);
        }
        pool
    }
}

impl From<TradeoffPool> for PoolRepr {
    fn from(p: TradeoffPool) -> Self {
        PoolRepr { points: p.points }
    }
}

impl PartialEq for TradeoffPool {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl TradeoffPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when an equivalent scaling is already present; the
    /// existing entry is kept.
    pub fn insert(
        &mut self,
        scaling: ScalingVector,
        metrics: MetricBundle,
        provenance: Provenance,
    ) -> bool {
        let key = scaling.canonical_key();
        if self.index.contains_key(&key) {
            return false;
        }
        self.index.insert(key, self.points.len());
        self.points.push(PoolPoint {
            scaling,
            metrics,
            provenance,
        });
        true
    }

    pub fn insert_explicit(&mut self, scaling: ScalingVector, metrics: MetricBundle) -> bool {
        self.insert(scaling, metrics, Provenance::Explicit)
    }

    pub(crate) fn mark(&mut self, scaling: &ScalingVector, provenance: Provenance) {
        if let Some(&i) = self.index.get(&scaling.canonical_key()) {
            self.points[i].provenance = provenance;
        }
    }

    pub fn get(&self, scaling: &ScalingVector) -> Option<&PoolPoint> {
        self.index
            .get(&scaling.canonical_key())
            .map(|&i| &self.points[i])
    }

    pub fn extend(&mut self, other: TradeoffPool) {
        for p in other.points {
            self.insert(p.scaling, p.metrics, p.provenance);
        }
    }

    pub fn points(&self) -> &[PoolPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
