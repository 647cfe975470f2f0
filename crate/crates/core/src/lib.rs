//! FDTD extraction of cooperative decay spectra and dipole-dipole
//! interaction potentials, plus a two-atom resolvent dynamics layer.
//!
//! Units are natural: `c = eps0 = mu0 = hbar = 1`, lengths in the scene's
//! reference length and frequencies in `c / reference_length`.

pub mod dynamics;
pub mod error;
pub mod fdtd;
pub mod hilbert;
pub mod num;
pub mod oracles;
pub mod radiometry;
pub mod resonance;
pub mod scene;

pub use error::{Error, Result};
pub use num::Real;

/// Single-precision solver state, the usual choice for large cavity runs.
pub type State32 = fdtd::SimulationState<f32>;
pub type State64 = fdtd::SimulationState<f64>;
