//! Interpretable outcome prediction.
//!
//! Multiple imputation crossed with stratified cross-validation, five
//! classifier families scored by AUC, forward feature selection under a
//! minimum AUC-gain gate, and decision-tree threshold extraction with
//! contingency statistics. A synthetic cohort generator with planted
//! structure drives the tests.

pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod impute;
pub mod interpret;
pub mod learners;
pub mod linalg;
mod par;
pub mod pipeline;
pub mod rng;
pub mod select;
pub mod synthgen;

pub use error::{Error, Result};
pub use par::with_jobs;
