use alloc::string::String;

use crate::gaussian_state::Mode;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("mode {0} is not part of the layout")]
    UnknownMode(Mode),
    #[error("mode {0} requested more than once")]
    DuplicateMode(Mode),
    #[error(
        "covariance matrix violates the uncertainty relation (min eigenvalue {min_eigenvalue:e})"
    )]
    Unphysical { min_eigenvalue: f64 },
    #[error("drift matrix is unstable (stability margin {margin:e})")]
    Unstable { margin: f64 },
    #[error("linear solve failed (condition estimate {condition:e}, residual {residual:e})")]
    Singular { condition: f64, residual: f64 },
    #[error("matrix exponential overflow (norm {norm:e})")]
    Overflow { norm: f64 },
    #[error("state became non-finite at t = {time:e} s")]
    NonFinite { time: f64 },
    #[error("time step too coarse: full/half-step discrepancy {discrepancy:e}")]
    StepTooCoarse { discrepancy: f64 },
    #[error("mean-field fixed point did not converge after {iterations} iterations")]
    FixedPointDiverged { iterations: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
