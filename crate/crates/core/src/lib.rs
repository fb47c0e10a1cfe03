//! Linear probes on frozen sentence embeddings, cross-validated label
//! matrices, and family-level parallax deltas between embedding models.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod genprobe;
pub mod lbfgs;
pub mod parallax;
pub mod probe;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
