//! Joint quantile disease mapping.
//!
//! Poisson counts whose quantiles (rather than means) are tied to latent
//! Gaussian fields through the continuous-Poisson quantile map, a shared
//! proper-Besag component linking two diseases, and an INLA-style
//! approximate inference engine.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the CLI and
//! any threading live in the `qdm` companion crate.

#![no_std]
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;

pub mod assessment;
pub mod error;
pub mod fit;
pub mod gmrf;
pub mod graph;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod quantile;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use graph::ArealGraph;
