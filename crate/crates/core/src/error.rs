use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no path found for element {element}: peak {peak_db:.2} dB is below the noise floor {floor_db:.2} dB")]
    NoPathFound {
        element: usize,
        peak_db: f64,
        floor_db: f64,
    },

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors raised by the numerics rather than by I/O or input plumbing.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::NoPathFound { .. } | Error::DegenerateGrid(_) | Error::NonFinite(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
