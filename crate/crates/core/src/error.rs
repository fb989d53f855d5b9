use thiserror::Error;

use crate::coefficients::Regime;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "degeneracy exponent K = {exponent} is {regime:?}: the problem is not null-controllable for K ≥ 2 (K < 2 is required)"
    )]
    InadmissibleExponent { exponent: f64, regime: Regime },

    #[error("control region geometry: {0}")]
    Geometry(String),

    #[error("control region resolution: {0}")]
    Resolution(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("linear solver failure: {0}")]
    SolverFailure(String),

    #[error(
        "conjugate gradient breakdown at iteration {iteration}: curvature {curvature:e} is not positive (adjoint inconsistency?)"
    )]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("problem too large for the dense oracle: N*Nt = {size} exceeds {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("non-finite values at indices {0:?}")]
    NonFinite(Vec<usize>),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
