use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical kernel, the solvers and the closed-loop driver.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Reciprocal condition estimate fell below the singularity threshold.
    SingularMatrix {
        rcond: f64,
    },
    /// `‖M − Mᵀ‖_F` exceeded the symmetry tolerance.
    NotSymmetric {
        asymmetry: f64,
    },
    NoConvergence {
        iterations: usize,
        residual: f64,
    },
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A box has `lower[index] > upper[index]`.
    EmptyBox {
        index: usize,
    },
    RankDeficient {
        rank: usize,
        required: usize,
    },
    SingularWeight,
    SingularKkt,
    /// The stacked matrix `O = B̄₁Q̄⁻¹B̄₁ᵀ + B̄₂R̄⁻¹B̄₂ᵀ` is not invertible.
    SingularO,
    NotPd {
        what: &'static str,
    },
    NonFinite {
        what: &'static str,
    },
    InvalidParameter(&'static str),
    AssumptionViolated(&'static str),
    Infeasible,
    IterationLimit {
        changes: usize,
    },
    LengthMismatch {
        expected: usize,
        found: usize,
    },
    CertificationFailed(String),
    StepFailed {
        step: usize,
        source: Box<Error>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SingularMatrix { rcond } => {
                write!(f, "matrix is numerically singular (rcond = {rcond:.3e})")
            }
            Error::NotSymmetric { asymmetry } => {
                write!(f, "matrix is not symmetric (‖M − Mᵀ‖_F = {asymmetry:.3e})")
            }
            Error::NoConvergence {
                iterations,
                residual,
            } => write!(
                f,
                "no convergence after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch for {what}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::EmptyBox { index } => write!(f, "empty box: lower > upper at index {index}"),
            Error::RankDeficient { rank, required } => {
                write!(f, "rank deficient: rank {rank}, required {required}")
            }
            Error::SingularWeight => f.write_str("weight matrix is not positive definite"),
            Error::SingularKkt => f.write_str("KKT matrix is numerically singular"),
            Error::SingularO => f.write_str("stacked matrix O is not invertible"),
            Error::NotPd { what } => write!(f, "{what} is not positive definite"),
            Error::NonFinite { what } => write!(f, "{what} contains non-finite entries"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::AssumptionViolated(msg) => write!(f, "assumption violated: {msg}"),
            Error::Infeasible => f.write_str("QP is infeasible"),
            Error::IterationLimit { changes } => {
                write!(
                    f,
                    "active-set iteration limit reached after {changes} changes"
                )
            }
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::CertificationFailed(msg) => write!(f, "certification failed: {msg}"),
            Error::StepFailed { step, source } => write!(f, "step {step} failed: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::StepFailed { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
