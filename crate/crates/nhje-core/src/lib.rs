//! Desk-scale simulator for postselected (no-jump) dynamics of a driven
//! two-level system whose Hamiltonian interpolates between a PT-symmetric
//! and an anti-PT-symmetric form under an SU(2) rotation angle.
//!
//! The crate covers the full numerical pipeline behind the companion CLI:
//!
//! * [`algebra`]: closed-form 2x2 complex exponentials plus the independent
//!   series oracle they are validated against.
//! * [`model`]: the hybrid Hamiltonian family, drive protocols, rotated
//!   frames, energy eigenbasis, and the parity-exchange operator.
//! * [`evolution`]: time-ordered propagation, conditional transition tables,
//!   Bloch trajectories, survival curves, the piecewise re-preparation
//!   scheme, and a three-level Lindblad cross-check.
//! * [`thermo`]: Gibbs weights, two-point-measurement work distributions,
//!   and the exponential-work (Jarzynski) check.
//! * [`floquet`]: effective Floquet generator extraction with phase
//!   unwrapping, and the symmetry-revival root search.
//! * [`shots`]: finite-shot Monte Carlo emulation with block statistics.
//!
//! Units everywhere: time in microseconds, rates and energies in rad/us,
//! inverse temperature in us/rad. All public entry points are pure functions
//! over plain value types and are safe to call concurrently.

pub mod algebra;
pub mod error;
pub mod evolution;
pub mod export;
pub mod floquet;
pub mod model;
pub mod shots;
pub mod thermo;

pub use algebra::{Mat2C, PauliDecomp, C64};
pub use error::{NhjeError, Result};
