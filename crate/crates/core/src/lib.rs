#![no_std]
//! Simulation core for two flux-tunable transmons joined by a tunable coupler.
//!
//! Everything here needs only `alloc`. File formats, the command line and
//! parallel sweeps live in the `ddrsim` crate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod device;
pub mod dynamics;
pub mod error;
pub mod gates;
pub mod linalg;
pub mod model;
pub mod opt;
pub mod pulse;
pub mod qspace;
pub mod tomo;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
