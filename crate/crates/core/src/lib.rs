//! Exact effective bond volumes on integer lattices and a consistent
//! atomistic/continuum coupling built on them.

pub mod bond_volume;
pub mod crystal_model;
pub mod energy;
pub mod equilibrium;
pub mod error;
pub mod exact_sums;
pub mod lattice_geometry;

pub use error::{LatvolError, Result};
