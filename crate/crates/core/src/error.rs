use thiserror::Error;

/// Errors produced while building grids, pumps, kernels and metrics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid pump: {0}")]
    InvalidPump(String),

    #[error("pump is aliased: {tail_fraction:.3e} of its energy lies outside the frequency grid")]
    AliasedPump { tail_fraction: f64 },

    #[error("bin index {bin} is outside the grid range [-{half}, {half}]")]
    BinOutOfRange { bin: i64, half: i64 },

    #[error("target matrix is not an isometry: rows {row_a} and {row_b} have inner product deviation {deviation:.3e}")]
    NonIsometric { row_a: usize, row_b: usize, deviation: f64 },

    #[error("pump envelopes are not orthonormal: Gram deviation {deviation:.3e} at ({row}, {col})")]
    NonOrthonormalPumps { row: usize, col: usize, deviation: f64 },

    #[error("no cavity dynamics: gamma*T + eta^2 must be positive")]
    NoCavityDynamics,

    #[error("near-singular periodic solve: condition number {condition:.3e}")]
    NearSingularPeriodicSolve { condition: f64 },

    #[error("step count {n_steps} is not a positive multiple of the {n_times} time samples")]
    StepMisaligned { n_steps: usize, n_times: usize },

    #[error("no conversion: the signal kernel vanishes identically")]
    NoConversion,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("oracle solve failed: {0}")]
    Oracle(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error JSON and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidParams(_) => "invalid_params",
            Error::InvalidPump(_) => "invalid_pump",
            Error::AliasedPump { .. } => "aliased_pump",
            Error::BinOutOfRange { .. } => "bin_out_of_range",
            Error::NonIsometric { .. } => "non_isometric",
            Error::NonOrthonormalPumps { .. } => "non_orthonormal_pumps",
            Error::NoCavityDynamics => "no_cavity_dynamics",
            Error::NearSingularPeriodicSolve { .. } => "near_singular_periodic_solve",
            Error::StepMisaligned { .. } => "step_misaligned",
            Error::NoConversion => "no_conversion",
            Error::Dimension(_) => "dimension",
            Error::Oracle(_) => "oracle",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }
}
