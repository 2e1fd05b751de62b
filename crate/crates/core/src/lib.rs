//! Gaussian-state dynamics of a driven cavity with two magnomechanical
//! ferrimagnets, and the two-step protocol that transfers magnon–phonon
//! entanglement onto the two phonon modes.
//!
//! The crate is `no_std` (with `alloc`). File formats, parameter sweeps and
//! the command line live in the companion `magnomech` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN takes the rejection branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod expm;
pub mod gaussian_state;
pub mod linear_dynamics;
pub mod model;
pub mod protocol;

pub use error::{Error, Result};
pub use gaussian_state::{CovarianceMatrix, Mode, ModeLayout, PHYSICALITY_TOL};
pub use linear_dynamics::{DiffusionMatrix, DriftMatrix};
pub use model::{DriveProfile, DriveSpec, DriveStrength, Magnet, SystemParams};
