//! Simulation and batch-processing toolkit for a low-cost autonomous surface
//! vehicle: acoustic beacon tracking, single-beam bathymetry and photogrammetric
//! survey planning.

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod bathy;
pub mod geo;
pub mod logfmt;
pub mod mission;
pub mod photo;
pub mod sbl;
pub mod sim;
pub mod tracker;
