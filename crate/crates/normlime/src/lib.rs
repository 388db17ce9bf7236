//! Local surrogate explanations, aggregated into global feature salience, and
//! a retraining harness that scores how faithful those saliences are.
//!
//! The pipeline has three stages:
//!
//! 1. **Local explanations** ([`surrogate`]): perturb an anchor instance with
//!    Gaussian noise, query the black-box classifier, and fit a sparse
//!    weighted linear surrogate (LASSO selection + least-squares refit).
//! 2. **Global salience** ([`salience`]): normalize each explanation to unit
//!    L1 mass and average the attributed weight per feature across many
//!    anchors, globally or per predicted class. Gradient-noise and Shapley
//!    baselines live in [`baselines`].
//! 3. **Keep-and-retrain evaluation** ([`kar`]): mask the lowest-ranked
//!    features, retrain from scratch, and report the error gained versus the
//!    unmasked baseline — the closer to zero at aggressive masking, the
//!    better the ranking.
//!
//! Models are small dense ReLU networks ([`model`]) trained with seeded SGD,
//! so every artifact in the pipeline is bit-reproducible from a seed. See the
//! `examples/` directory for runnable tours of each stage, and the `normlime`
//! binary for the file-based workflow (IDX/CSV in, JSON/CSV/PGM out).

pub mod baselines;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
mod hashing;
pub mod kar;
pub mod manifest;
pub mod model;
pub mod render;
pub mod salience;
pub mod surrogate;

pub use error::{Error, Result};
