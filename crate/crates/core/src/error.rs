use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero right-hand side")]
    ZeroRhs,

    #[error("breakdown at step {step}: {coefficient} = {value:e} fell below threshold")]
    Breakdown {
        step: usize,
        coefficient: &'static str,
        value: f64,
    },

    #[error("rank deficiency: zero diagonal in triangular factor at index {0}")]
    RankDeficient(usize),

    #[error("stacked matrix (A; L) is rank deficient (numerical rank {rank} < {n}); N(A) and N(L) must intersect trivially")]
    StackedRankDeficient { rank: usize, n: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("no L-curve corner: {0}")]
    NoCorner(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
