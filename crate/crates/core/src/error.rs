use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("diffusion time {t} is below the supported minimum {t_min}")]
    UnsupportedRegime { t: f64, t_min: f64 },

    #[error("coupling convention mismatch: expected {{{expected}}}, found {{{found}}}")]
    ConventionMismatch { expected: usize, found: usize },

    #[error("cannot shift convention {{{from}}} {direction} for N = {n}")]
    ConventionBoundary {
        from: usize,
        direction: &'static str,
        n: usize,
    },

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("not a valid density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("bisection bracket invalid: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    BracketInvalid { g_lo: f64, g_hi: f64 },

    #[error("optimizer did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
