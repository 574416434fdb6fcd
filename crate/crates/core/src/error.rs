use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("truncation leakage {leakage:.3e} exceeds {limit:.1e} at n_max={n_max}")]
    Leakage { leakage: f64, limit: f64, n_max: usize },

    #[error("Kraus completeness defect {defect:.3e} at ell={ell} (limit {limit:.1e})")]
    KrausTail { defect: f64, ell: usize, limit: f64 },

    #[error("minimum at bracket edge: beta={at} in [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64, at: f64 },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("non-finite matrix entries")]
    NonFinite,

    #[error("eigenvalue {0} lies on the closed negative real axis")]
    BranchAmbiguity(Complex64),

    #[error("ill-conditioned Gram matrix (min |eig| = {0:.3e})")]
    IllConditioned(f64),

    #[error("zero-probability branch for outcome {0}")]
    ZeroProbability(u8),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI and mirrored by the C ABI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::DimMismatch { .. } => 2,
            Error::Leakage { .. }
            | Error::KrausTail { .. }
            | Error::NoBracket { .. }
            | Error::Integrator(_)
            | Error::NotConverged(_) => 3,
            Error::NonFinite
            | Error::BranchAmbiguity(_)
            | Error::IllConditioned(_)
            | Error::ZeroProbability(_)
            | Error::Numerical(_) => 4,
            Error::Io(_) => 1,
        }
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
