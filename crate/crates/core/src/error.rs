use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A caller-supplied argument is outside the operation's domain.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// The inputs are well-formed but the requested quantity does not exist
    /// for them (e.g. a crossover point for a supercritical position).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient history: need at least {required} rows, got {available}")]
    InsufficientHistory { required: usize, available: usize },

    /// Bad market data; `row` is the 1-based data row (header excluded).
    #[error("data error at row {row}: {reason}")]
    Data { row: usize, reason: String },

    #[error("parse error in {location}: {reason}")]
    Parse { location: String, reason: String },

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        CoreError::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

/// Rejects NaN and values below zero.
pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_nan() || value < 0.0 {
        return Err(CoreError::invalid(
            name,
            format!("must be >= 0, got {value}"),
        ));
    }
    Ok(())
}

/// Rejects NaN, zero and negative values.
pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_nan() || value <= 0.0 {
        return Err(CoreError::invalid(
            name,
            format!("must be > 0, got {value}"),
        ));
    }
    Ok(())
}
