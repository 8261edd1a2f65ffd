//! Diagnostic-classification pipeline for connectome-style feature data:
//! feature construction from connectivity matrices and morphometry tables,
//! leakage-guarded nested cross-validated model search, per-subject
//! classification-quality analytics, conformal prediction and operating-point
//! reporting.
//!
//! Start with [`synth`] to generate a cohort, [`cv`] to run an experiment,
//! [`pcq`] and [`report`] to analyze the decision log. The `neuropipe` binary
//! wires the same functions into subcommands; the `examples/` directory holds
//! one runnable example per capability.

pub mod classify;
pub mod cli;
pub mod cohort;
pub mod conformal;
pub mod cv;
pub mod expspec;
pub mod dimred;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod manifest;
pub mod pcq;
pub mod report;
pub mod rng;
pub mod select;
pub mod synth;
pub mod topology;

pub use error::{Error, Result};
