//! Numerical laboratory for the vector-valued free boundary system
//! `Δu = |u|^{p-2} u`, `0 < p < 1`.

pub mod barriers;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod energy;
pub mod grid;
mod linalg;
pub mod linearized;
pub mod solver;

pub use error::{FbError, Result};
pub use exact::{make_params, HalfSpaceSolution, OdeProfile, PParams};
pub use grid::{Grid, VectorField};
