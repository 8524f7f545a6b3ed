use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violates the contract of an operation.
    #[error("invalid specification: {0}")]
    Spec(String),

    /// The operation is not defined for the given input (e.g. density of a discrete law).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Symbolic expansion grew past the configured number of terms.
    #[error("term budget exceeded: {terms} terms (budget {budget})")]
    Budget { terms: usize, budget: usize },

    /// Monte Carlo estimation could not produce a value.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// A quantity that must hold up to rounding is violated beyond tolerance.
    #[error("numerical inconsistency: {0}")]
    Numerical(String),

    /// A density carries too much mass outside the evaluation grid.
    #[error(
        "grid [{lo}, {hi}] misses {deficit:.3e} of probability mass (tolerance {tail_tol:.1e}); \
         extend it to about [{suggested_lo}, {suggested_hi}]"
    )]
    GridCoverage {
        lo: f64,
        hi: f64,
        deficit: f64,
        tail_tol: f64,
        suggested_lo: f64,
        suggested_hi: f64,
    },

    /// Too few usable points for a fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Configuration file could not be parsed or validated.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn spec_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Spec(msg.into()))
}
