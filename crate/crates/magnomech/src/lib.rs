//! Parameter files, grid sweeps, figure presets and result tables for the
//! two-magnet magnomechanical entanglement protocol in `magnomech-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod sweep;

pub use config::{Hz, ParamFile, Resolved};
pub use error::{CliError, ConfigError};
pub use sweep::{run_sweep, Axis, Quantity, Record, Stage, SweepConfig, SweepResult};
