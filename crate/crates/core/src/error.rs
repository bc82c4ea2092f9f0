use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The tip cannot be produced by a constant-curvature arc of the given length.
    /// `nearest` holds the direction-preserving projection onto the reachable shell.
    #[error("tip unreachable under the constant-curvature model (residual {residual:.3e} mm)")]
    Unreachable { residual: f64, nearest: (f64, f64) },
    #[error("history holds {have} of {need} samples")]
    HistoryNotFull { have: usize, need: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
