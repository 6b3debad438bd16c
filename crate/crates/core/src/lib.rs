//! Multiple equilibria of nematic and cholesteric liquid crystals by deflated,
//! damped Newton iteration on a nested hierarchy of Q2/P0 finite-element grids.

pub mod deflation;
pub mod driver;
pub mod energy;
pub mod error;
pub mod export;
pub mod fem;
pub mod guesses;
pub mod linear;
pub mod newton;
pub mod presets;
pub mod selfcheck;
pub mod sparse;
pub mod state;
pub mod sweep;

pub use error::{Error, Result};
pub use state::{unit_length_violation, State};
