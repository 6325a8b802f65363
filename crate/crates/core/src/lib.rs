//! Simulation and estimation of regularly varying stationary random fields
//! on the lattice `Z^k`.

pub mod cluster;
pub mod error;
pub mod gaussian;
pub mod index;
pub mod lattice;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod tailfield;
pub mod testfn;
pub mod verify;

pub use error::{Error, Result};

/// Library version stamped into every output record.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
