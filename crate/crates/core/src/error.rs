use thiserror::Error;

/// Every failure the engine can report, on the wire or in-process.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("invalid parameter `{field}`: {reason}")]
    Param { field: String, reason: String },

    #[error("malformed request at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("schema violation on `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unknown synopsis `{0}`")]
    UnknownSynopsis(String),

    #[error("unknown synopsis kind `{0}`")]
    UnknownKind(String),

    #[error("synopsis `{0}` already exists")]
    DuplicateId(String),

    #[error("plugin `{0}` is already registered")]
    DuplicatePlugin(String),

    #[error("query `{query}` does not apply to a {kind} synopsis")]
    QueryMismatch { kind: String, query: String },

    #[error("record rejected: {0}")]
    Record(String),

    #[error("incompatible states: {left} vs {right}")]
    Merge { left: String, right: String },

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("frame decode failed: {0}")]
    Codec(String),

    #[error("federated answer incomplete, missing sites: {}", missing.join(", "))]
    PartialFederation { missing: Vec<String> },

    #[error("site `{0}` unreachable")]
    Unreachable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("engine is shutting down")]
    Shutdown,

    #[error("i/o error: {0}")]
    Io(String),
}

impl SdeError {
    pub fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SdeError::Param {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        SdeError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Stable machine-readable code used in error responses.
    pub fn code(&self) -> &'static str {
        match self {
            SdeError::Param { .. } => "invalid_parameter",
            SdeError::Parse { .. } => "parse_error",
            SdeError::Schema { .. } => "schema_error",
            SdeError::Protocol(_) => "protocol_error",
            SdeError::UnknownSynopsis(_) => "unknown_synopsis",
            SdeError::UnknownKind(_) => "unknown_kind",
            SdeError::DuplicateId(_) => "duplicate_id",
            SdeError::DuplicatePlugin(_) => "duplicate_plugin",
            SdeError::QueryMismatch { .. } => "query_mismatch",
            SdeError::Record(_) => "record_rejected",
            SdeError::Merge { .. } => "merge_error",
            SdeError::Degenerate(_) => "degenerate",
            SdeError::Codec(_) => "codec_error",
            SdeError::PartialFederation { .. } => "partial_federation",
            SdeError::Unreachable(_) => "unreachable",
            SdeError::Config(_) => "config_error",
            SdeError::Shutdown => "shutdown",
            SdeError::Io(_) => "io_error",
        }
    }
}

impl From<std::io::Error> for SdeError {
    fn from(e: std::io::Error) -> Self {
        SdeError::Io(e.to_string())
    }
}

pub type Result<T, E = SdeError> = std::result::Result<T, E>;
