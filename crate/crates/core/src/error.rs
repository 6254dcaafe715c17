use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated an operation's precondition or passed an invalid setting.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("action {action} is not legal here (mask {mask})")]
    MaskViolation { action: u8, mask: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("tail of {len} slots exceeds the enumeration cap of {cap}")]
    TailTooLong { len: usize, cap: usize },

    #[error("no crossing in [{lo}, {hi}]: expected profit {profit_lo:.4} .. {profit_hi:.4} vs benchmark {benchmark:.4}")]
    NoCrossing {
        lo: f64,
        hi: f64,
        profit_lo: f64,
        profit_hi: f64,
        benchmark: f64,
    },

    #[error("degenerate parameter: {0}")]
    Degenerate(String),

    #[error("{path}:{line}: {msg}")]
    Data {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Statistics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI: 2 usage, 3 data, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_)
            | Error::InvalidParameter { .. }
            | Error::MaskViolation { .. }
            | Error::TailTooLong { .. } => 2,
            Error::Data { .. } | Error::Csv(_) | Error::Json(_) => 3,
            _ => 4,
        }
    }
}
