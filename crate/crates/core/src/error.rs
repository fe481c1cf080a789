use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid receptor spec: {0}")]
    InvalidReceptor(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("time step {delta_t} too large: P[{row}][{col}] = {value} is outside [0, 1]")]
    StepTooLarge {
        delta_t: f64,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("chain is not irreducible: {0}")]
    NotIrreducible(String),

    #[error("moment order {requested} exceeds the supported maximum {max}")]
    OrderTooHigh { requested: usize, max: usize },

    #[error("quadrature did not converge after {doublings} node doublings (last change {last_change:e})")]
    NoConvergence { doublings: u32, last_change: f64 },

    #[error("argument outside domain: {0}")]
    DomainError(String),

    #[error("series does not converge on [{a}, {b}]: support must lie in (0, 2]")]
    OutOfConvergenceRegion { a: f64, b: f64 },

    #[error("series raw-moment and central forms disagree by {discrepancy:e}")]
    SeriesCrossCheck { discrepancy: f64 },

    #[error("|x - mu| = {0:e} too small for the closed-form remainder")]
    DegenerateArgument(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("sweep produced no rows")]
    EmptySweep,

    #[error("field `{0}` is not populated in every row")]
    MissingField(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
}
