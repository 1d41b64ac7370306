//! Deterministic federated-learning simulator where every client weight is
//! split into a shared full-rank part and a personalized low-rank part.
//!
//! * [`tensor`]: dense tensors, reverse-mode autodiff, seeded RNG, SGD.
//! * [`nn`]: MLP / CNN reference models and decomposed layers.
//! * [`data`]: synthetic and IDX datasets, Dirichlet partitioning.
//! * [`engine`]: round orchestration and aggregation for every training mode.
//! * [`metrics`]: accuracy, model difference, drift norms, CSV/JSON reports.
//! * [`runner`]: config files, end-to-end runs and ablation suites.

pub mod data;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod runner;
pub mod tensor;

pub use error::{Error, ErrorCategory, Result};
