//! Loss statistics of links and paths in a network operating at the onset
//! of capacity overload.
//!
//! Links are bounded drift-diffusion queues whose imbalance is spread
//! narrowly around zero and whose load follows a power law. The crate
//! simulates single links, inverts their Laplace-domain loss density,
//! aggregates losses along paths, drives an idealized AIMD sender with the
//! result, and measures load heterogeneity on scale-free graphs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aimd;
pub mod analytics;
pub mod error;
pub mod laplace;
pub mod model;
pub mod path;
pub mod queue;
pub mod rng;
pub mod special;
pub mod stats;
pub mod topology;

pub use error::{Error, Result};
