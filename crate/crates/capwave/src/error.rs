use thiserror::Error;

/// Errors surfaced by the solvers and constructors.
#[derive(Debug, Error)]
pub enum CapError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("diffeomorphism violated: min d3(phi~) = {min:.3e}")]
    DiffeomorphismViolation { min: f64 },

    #[error("hyperbolicity violated: lambda^2 gamma q + 1 = {value:.3e} <= 0")]
    HyperbolicityViolation { value: f64 },

    #[error("elliptic solver diverged: {0}")]
    SolverDivergence(String),

    #[error("singular vertical block at mode ({m}, {n})")]
    SingularMode { m: i64, n: i64 },

    #[error("input has a kernel component of size {0:.3e}")]
    KernelComponent(f64),

    #[error("dense operator unavailable: {dof} surface dof exceeds cap {cap}")]
    DenseTooLarge { dof: usize, cap: usize },

    #[error("CFL violated: dt = {dt:.3e} exceeds {max_dt:.3e}")]
    CflViolation { dt: f64, max_dt: f64 },

    #[error("solution blow-up: {0}")]
    BlowUp(String),

    #[error("insufficient history: need {need} states, have {have}")]
    InsufficientHistory { need: usize, have: usize },

    #[error("unsupported derivative multi-index: {0}")]
    UnsupportedAlpha(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CapError>;
