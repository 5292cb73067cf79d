//! Adaptive robust scaling: per-cluster (IRS) and per-attribute (ARS)
//! scaling vectors on top of the class-specific search.
//!
//! Each subset search maximizes the target metric measured within that
//! subset; groups absent from the subset are left out of the metric as
//! usual.

mod ars;
mod irs;

pub use ars::{
    ars_fit, ars_predict, ars_scalings, fit_attribute_estimator, AttributeEstimator,
    AttributeScalingModel, EstimatorConfig,
};
pub use irs::{
    irs_coverage, irs_fit, irs_predict, select_k, ClusterScalingModel, IrsOptions, KSelection,
    DEFAULT_CLUSTERS, DEFAULT_K_CANDIDATES,
};
