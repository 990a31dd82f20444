use thiserror::Error;

/// Whether a failure came from bad input or from the numerics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid medium: {0}")]
    InvalidMedium(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("coefficient table cutoff {table} is below the required {required}")]
    TableTooSmall { table: usize, required: usize },
    #[error("mass matrix is not numerically positive definite")]
    MassNotPositiveDefinite,
    #[error("eigensolver failed at k = {k:?}")]
    EigenFailure { k: [f64; 2] },
    #[error("eigenvalue {p} at Gamma is not simple (relative separation {separation:.3e})")]
    NotSimple { p: usize, separation: f64 },
    #[error("Fredholm compatibility violated: |<b, phi>| = {inner:.3e} exceeds {bound:.3e}")]
    CompatibilityViolation { inner: f64, bound: f64 },
    #[error("bordered cell system is singular (relative residual {residual:.3e})")]
    SingularSystem { residual: f64 },
    #[error("omega^2 = {omega_sq} is not inside a band gap (branch {branch} spans [{lo}, {hi}])")]
    NotInGap { omega_sq: f64, branch: usize, lo: f64, hi: f64 },
    #[error("denominator {value:.3e} for mode {m} at k = {k:?} is too close to the driving frequency")]
    GapViolation { k: [f64; 2], m: usize, value: f64 },
    #[error("envelope denominator {value:.3e} vanishes at khat = {khat:?}")]
    EnvelopeSingularity { khat: [f64; 2], value: f64 },
    #[error("boundary/peak ratio {ratio:.3e} exceeds {threshold:.1e}; enlarge the domain")]
    DecayCheckFailed { ratio: f64, threshold: f64 },
    #[error("sparse factorization of the reference operator failed")]
    ReferenceSolve,
    #[error("grids do not match")]
    GridMismatch,
    #[error("tensor rank {0} outside 1..=4")]
    RankOutOfRange(usize),
    #[error("slope fit needs at least 3 distinct positive samples")]
    DegenerateFit,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidMedium(_)
            | Error::InvalidParameter { .. }
            | Error::TableTooSmall { .. }
            | Error::NotInGap { .. }
            | Error::GridMismatch
            | Error::RankOutOfRange(_)
            | Error::DegenerateFit => ErrorKind::Validation,
            _ => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
