//! Few-shot episodic meta-learning over precomputed embedding vectors, with
//! group-distributionally-robust training objectives.
//!
//! The crate bundles:
//! - a small tape-based autodiff engine supporting second-order gradients
//!   ([`autodiff`]),
//! - embedding-store ingestion with frequency strata and text cleaning
//!   ([`dataset`]),
//! - N-way K-shot episodic sampling with group codes on query items
//!   ([`episodes`]),
//! - Prototypical Network and MAML meta-learners ([`models`]),
//! - group-DRO objectives with global group statistics ([`dro`]),
//! - meta-train/meta-test loops with worst/best/middle-group metrics
//!   ([`trainer`]),
//! - a synthetic grouped-shift data generator ([`synth`]).
//!
//! See the `examples/` directory for runnable entry points per capability,
//! and the `metadro` binary for the CLI surface.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod dro;
pub mod episodes;
pub mod error;
pub mod models;
pub mod numcheck;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
