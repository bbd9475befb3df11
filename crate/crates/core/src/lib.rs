//! Query-by-boosting ensemble tracker.
//!
//! A committee of short-memory k-NN classifiers votes on candidate patches
//! sampled around the previous target state. Candidates the committee
//! disputes are labeled by a long-memory oracle; those labels drive a
//! modified AdaBoost update of every committee member. The crate also
//! provides OTB-layout sequence loading, a synthetic sequence generator
//! with exact ground truth, and success/precision evaluation.
//!
//! Data-parallel loops (candidate featurization and scoring, per-member
//! boosting) run on rayon when the `parallel` feature is enabled (the
//! default) and sequentially otherwise. Results are identical either way.

pub mod config;
pub mod datasets;
pub mod engine;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod learners;
pub mod par;
pub mod sampling;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, Transformation};
