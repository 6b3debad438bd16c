use std::path::PathBuf;

/// Errors raised by the solver stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// The iterate coincides with a deflated root, so the deflation factor is singular.
    #[error("iterate coincides with a known solution (U-distance {distance:e})")]
    AtKnownRoot { distance: f64 },

    /// The Sherman–Morrison denominator `1 + dᵀy/η` vanished.
    #[error("singular deflated update (denominator {denominator:e})")]
    SingularUpdate { denominator: f64 },

    #[error("linear solver stalled after {iterations} iterations (relative residual {relative_residual:e})")]
    SolverStall {
        iterations: usize,
        relative_residual: f64,
    },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
