use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected n = {expected}, got n = {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("gamma radius {radius} is insufficient: translates on or beyond the enumeration boundary carry mass")]
    InsufficientRadius { radius: u32 },

    #[error("omega must be nonzero")]
    ZeroOmega,

    #[error("not a frame: {0}")]
    NotAFrame(String),

    #[error("support overflow: shifted samples leave the window")]
    SupportOverflow,

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("frame index outside the scheme truncation")]
    OutsideTruncation,

    #[error("size overflow: {0} indices exceed the dense limit")]
    SizeOverflow(usize),

    #[error("eigensolve failure: {0}")]
    Eigensolve(String),

    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroOmega
                | Error::NotAFrame(_)
                | Error::Eigensolve(_)
                | Error::NoConvergence { .. }
                | Error::InsufficientRadius { .. }
        )
    }
}
