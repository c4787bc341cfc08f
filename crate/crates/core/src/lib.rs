//! Simulation and equilibrium analysis for the Cahn-Hilliard equation with
//! Wentzell (permeable-wall) boundary conditions on a periodic strip or an
//! interval.
//!
//! The state is one nodal field on the closed domain; its wall rows are the
//! boundary trace. The evolution is the gradient flow `U_t = -A mu(U)` of the
//! bulk-plus-surface free energy in the product space of bulk and wall
//! functions, discretized so that the energy law, the mass/flux balance and
//! the self-adjointness of `A` hold exactly on the grid.

pub mod analysis;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod initial;
pub mod io;
pub mod operators;
pub mod potential;
pub mod sparse;
pub mod stationary;
pub mod svg;

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use energy::{EnergyModel, EnergyReport};
pub use error::{Error, Result};
pub use grid::{h_inner, h_norm, GridMode, PairField, StripGrid};
pub use operators::{Constants, NormReport, WentzellOperator};
pub use potential::{Potential, PotentialKind};
