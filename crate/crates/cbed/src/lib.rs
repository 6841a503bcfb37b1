//! Bayesian optimal experimental design for causal discovery over
//! linear-Gaussian and random-feature structural causal models.
//!
//! The crate simulates ground-truth models, maintains a posterior over DAG
//! structures, scores candidate interventions by expected information gain,
//! optimizes intervention values, assembles batches under several policies,
//! and tracks structure-recovery metrics across acquisition rounds.

pub mod error;
pub mod graphs;
pub mod harness;
pub mod infogain;
pub mod metrics;
pub mod policy;
pub mod posterior;
pub mod scm;
pub mod seeds;
pub mod valueopt;

pub(crate) mod linalg;

pub use error::{Error, Result};
