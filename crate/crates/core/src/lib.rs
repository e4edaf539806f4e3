//! Diffusive quantum trajectories for two qubits under spontaneous emission.
//!
//! The crate integrates the Itô diffusive stochastic Schrödinger equation for
//! the conditional two-qubit state, tracks pure-state concurrence and the
//! phase of `Θ = c̄*ψ₁₁²` along trajectories, builds the time-independent
//! optimal unraveling from the initial state, and simulates the homodyne
//! records that condition the evolution. A density-matrix propagator with
//! Wootters concurrence serves as the unconditional reference.

pub mod detection;
pub mod ensemble;
pub mod entanglement;
pub mod error;
pub mod io;
pub mod noise;
pub mod oracle;
pub mod presets;
pub mod sse;
pub mod state;
pub mod unraveling;

pub use error::{Error, Result};
pub use state::{make_state, DensityMatrix, LindbladSet, Operator, StateVector};
