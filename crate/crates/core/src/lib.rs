//! Periodic orbit statistics for subshifts of finite type and their
//! suspension flows: orbit enumeration, locally constant potentials,
//! thermodynamic quantities, orbit distribution tests, Livshits checks and
//! truncated orbit L-series.

pub mod error;
pub mod lfunction;
pub mod livshits;
pub mod numeric;
pub mod orbit_stats;
pub mod orbits;
pub mod potential;
pub mod sft;
pub mod suspension;
pub mod thermo;

pub use error::{Error, ErrorClass, Result};
pub use orbits::{ClosedOrbit, PrimeOrbit};
pub use potential::{LocallyConstantPotential, PotentialTable};
pub use sft::{Sft, Symbol};

/// Crate version, recorded in experiment metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
