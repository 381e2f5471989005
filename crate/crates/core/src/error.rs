use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates its invariant.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    /// Inputs are individually valid but do not fit together.
    #[error("{0}")]
    Domain(String),

    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Writing the trial log failed; `last_durable` is the last sequence
    /// number known to be written.
    #[error("trial log write failed (last durable sequence: {}): {source}", DisplaySeq(*.last_durable))]
    Persistence {
        last_durable: Option<u64>,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

struct DisplaySeq(Option<u64>);

impl fmt::Display for DisplaySeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(s) => write!(f, "{s}"),
            None => f.write_str("none"),
        }
    }
}
