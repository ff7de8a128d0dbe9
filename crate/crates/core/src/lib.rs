//! Gradient-boosted decision tree toolkit for imbalanced clinical tabular
//! data.
//!
//! The crate covers the full path from a raw CSV cohort to a validated
//! one-year risk model:
//!
//! * typed schema ingestion with an explicit missing-value mask and
//!   deterministic feature derivations ([`dataset`]),
//! * recurrence encoding of categorical features and histogram binning of
//!   numerical features, with missing values routed below every real value
//!   ([`encoding`]),
//! * a histogram GBDT with logistic loss and Newton leaf values ([`gbdt`]),
//! * exact per-patient Shapley attributions and importance-based feature
//!   selection ([`shap`]),
//! * fold-safe oversampling, repeated LOOCV / k-fold validation and grid
//!   search ([`harness`]), ROC/AUC and confusion metrics ([`metrics`]),
//! * a synthetic cohort generator driven by class-conditional marginal
//!   statistics ([`synth`]),
//! * the CLI pipeline driver and its report artifacts ([`pipeline`]).

pub mod dataset;
pub mod encoding;
pub mod error;
pub mod gbdt;
pub mod harness;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod schema;
pub mod shap;
pub mod synth;

pub use error::{Error, Result};
