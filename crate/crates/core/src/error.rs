use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of range: {value} (allowed {min}..={max})")]
    Range {
        what: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    /// Every state sequence has zero weight; the loss is +inf and the gradient undefined.
    #[error("degenerate input: no state path has positive weight (first dead step {step})")]
    Degenerate { step: usize },
    #[error("decode failed: {0}")]
    Decode(String),
    #[error("MIDI parse error at byte {offset}: {message}")]
    MidiParse { offset: usize, message: String },
    #[error("unsupported MIDI file: {0}")]
    UnsupportedFormat(String),
    #[error("malformed document: field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("unsupported document version {found} (expected {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },
    #[error("insufficient data: {len} steps, need at least {needed}")]
    InsufficientData { len: usize, needed: usize },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 I/O or parse, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_)
            | Error::Range { .. }
            | Error::Shape(_)
            | Error::Capacity(_)
            | Error::Invalid(_)
            | Error::InsufficientData { .. } => 1,
            Error::MidiParse { .. }
            | Error::UnsupportedFormat(_)
            | Error::Schema { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Io { .. } => 2,
            Error::Degenerate { .. } | Error::Decode(_) => 3,
        }
    }
}
