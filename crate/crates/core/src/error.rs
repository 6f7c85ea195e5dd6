use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("could not read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{} is not valid UTF-8", .0.display())]
    NotUtf8(PathBuf),

    #[error("no article id (digit run) in file name {}", .0.display())]
    NoArticleId(PathBuf),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid span [{begin}, {end})")]
    InvalidSpan { begin: usize, end: usize },

    #[error("span [{begin}, {end}) out of bounds for article {article_id} (length {len})")]
    SpanOutOfBounds {
        article_id: String,
        begin: usize,
        end: usize,
        len: usize,
    },

    #[error("unknown article {0}")]
    UnknownArticle(String),

    #[error("annotation {index}: {message}")]
    InvalidAnnotation { index: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("label {label} is not in the {scheme} label set")]
    LabelNotInScheme { label: String, scheme: String },

    #[error("unknown tag {0:?}")]
    UnknownTag(String),

    #[error("unknown tagging scheme {0:?}")]
    UnknownScheme(String),

    #[error("token range {start}..{end} out of bounds for {len} tokens")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("overlapping spans in article {article_id}: [{a_begin}, {a_end}) and [{b_begin}, {b_end})")]
    OverlappingSpans {
        article_id: String,
        a_begin: usize,
        a_end: usize,
        b_begin: usize,
        b_end: usize,
    },

    #[error("misaligned instances at position {index}: {message}")]
    Misaligned { index: usize, message: String },

    #[error("unknown technique {0:?}")]
    UnknownTechnique(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
