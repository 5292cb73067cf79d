//! Post-hoc robust scaling of classifier scores.
//!
//! Given per-sample class probabilities, class labels and spurious-attribute
//! labels, this crate searches class-specific scaling vectors that trade
//! average accuracy for worst-group or unbiased accuracy, summarizes the
//! whole trade-off with the robust coverage metric, and extends the scaling
//! to per-cluster and per-attribute variants. A synthetic spurious
//! correlation generator with a linear softmax trainer makes the pipeline
//! runnable end to end.
//!
//! With the default `parallel` feature, grid sweeps, per-cluster searches and
//! distance computations run on rayon; all reductions happen in a fixed
//! order, so results do not depend on the thread count.

pub mod adaptive;
pub mod cli;
pub mod clustering;
pub mod coverage;
pub mod dataset;
pub mod error;
pub mod io;
pub mod metrics;
mod par;
pub mod scaling;
mod serde_array;
pub mod synth;

#[cfg(test)]
mod testutil;

pub use dataset::{GroupId, PredictionSet};
pub use error::{Error, Result};
pub use metrics::{MetricBundle, RobustTarget, Target};
pub use scaling::{ScalingVector, SearchConfig, TradeoffPool};
