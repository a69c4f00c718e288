use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("support radius {radius} must be below L/4 = {limit}")]
    SupportTooLarge { radius: f64, limit: f64 },

    #[error("singular denominator {value:e} at lattice mode j = {mode:?} (component {component})")]
    SingularDenominator {
        component: usize,
        mode: [i64; 3],
        value: f64,
    },

    #[error("matrix is numerically singular (condition number {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("energy left the stability guard at t = {time}: H = {energy:e}, initial {initial:e}")]
    Instability {
        time: f64,
        energy: f64,
        initial: f64,
    },

    #[error("radius {radius} outside (0, L/2 = {limit}]")]
    RadiusOutOfRange { radius: f64, limit: f64 },

    #[error("contour tail {tail:e} exceeds tolerance {tolerance:e} at X_max = {x_max}")]
    TailTolerance {
        tail: f64,
        tolerance: f64,
        x_max: f64,
    },

    #[error("inverse Laplace transform left a relative imaginary residue {residue:e}")]
    ImaginaryResidue { residue: f64 },

    #[error("|x| = {x} is within {guard} of the branch point m = {mass}")]
    BranchPoint { x: f64, mass: f64, guard: f64 },

    #[error("fit window [{lo}, {hi}] holds {found} samples, need at least {needed}")]
    EmptyWindow {
        lo: f64,
        hi: f64,
        found: usize,
        needed: usize,
    },

    #[error("non-positive value {value:e} at t = {time} cannot be log-fitted")]
    NonPositiveValue { time: f64, value: f64 },

    #[error("spectral density not PSD: eigenvalue {eigenvalue:e} at mode j = {mode:?}")]
    NotPsd { mode: [i64; 3], eigenvalue: f64 },

    #[error("covariance blocks are not Hermitian: {0}")]
    NotHermitian(String),

    #[error("horizon S_max = {s_max} must stay below L/2 - R_rho = {limit}")]
    HorizonExceedsBox { s_max: f64, limit: f64 },

    #[error("trajectory is missing or inconsistent: {0}")]
    MissingTrajectory(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
