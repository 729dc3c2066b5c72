use std::path::PathBuf;

/// Errors raised by the engine and its configuration layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time {t} lies outside [0, {maturity}]")]
    TimeOutOfRange { t: f64, maturity: f64 },

    #[error("driver level at t = {0} is not available on this path")]
    MissingLevel(f64),

    #[error("common shocks exceed the marginal intensity of member {member} on segment {segment} by {excess:e}")]
    ShockExceedsMarginal {
        member: usize,
        segment: usize,
        excess: f64,
    },

    #[error("unknown member index {0}")]
    UnknownMember(usize),

    #[error("scenario config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by a bad scenario or bad arguments rather than by a failed run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidInput(_)
                | Error::ShockExceedsMarginal { .. }
                | Error::UnknownMember(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
