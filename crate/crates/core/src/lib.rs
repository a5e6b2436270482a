//! Interpretable model-based boosting for binary outcomes.
//!
//! Component-wise, group, and sparse group boosting with ridge base-learners
//! calibrated to equal effective degrees of freedom, K-step boosting for
//! interaction detection, cross-validated early stopping, and the
//! interpretation tools that go with them (importance, odds ratios, partial
//! effects).

pub mod boost;
pub mod data;
pub mod error;
pub mod factory;
pub mod interpret;
pub mod learner;
pub mod loss;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tuning;

pub use error::{Error, Result};
