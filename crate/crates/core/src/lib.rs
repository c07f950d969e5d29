//! Calibration of decoder priors for quantum error-correcting codes.
//!
//! Error models are detector hypergraphs whose hyperedge probabilities are
//! tied to a shared, time-invariant parameter vector. Small sensor codes
//! cover a target code; a team of policy-gradient agents (one per sensor)
//! tunes the shared parameters to minimise matching-decoder logical error
//! rates. Everything is validated against synthetic planted-truth devices.
//!
//! Module map:
//! - [`model`]: hypergraph model, file format, equivalence classes, bindings.
//! - [`codegen`]: repetition-code templates, planted models, sensor suites.
//! - [`sampler`]: Monte Carlo shots and sensor subsampling.
//! - [`decode`]: hyperedge decomposition, exact matching, LER estimation.
//! - [`fitprior`]: pairwise-correlation prior fitting.
//! - [`rlopt`]: multi-agent clipped-surrogate policy optimisation.
//! - [`harness`]: configuration, pipelines and result files.

pub mod codegen;
pub mod decode;
pub mod error;
pub mod fitprior;
pub mod harness;
pub mod model;
pub mod rlopt;
pub mod sampler;

pub use error::{Error, Result};
