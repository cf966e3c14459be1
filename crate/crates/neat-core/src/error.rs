use std::path::PathBuf;

/// Errors surfaced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at byte offset {offset}, field `{field}`: {message}")]
    MalformedRow {
        offset: u64,
        field: &'static str,
        message: String,
    },

    #[error("item `{item}` is tagged with conflicting categories `{first}` and `{second}`")]
    CategoryConflict {
        item: String,
        first: String,
        second: String,
    },

    #[error("item `{0}` has no category in the catalog")]
    MissingCategory(String),

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("zero-norm mean vector (untrained or degenerate item)")]
    ZeroNormMean,

    #[error("combined variance {0} is not positive")]
    NonPositiveVariance(f64),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("inconsistent counts for pair ({query}, {rec}): derived cell {cell} is negative")]
    InconsistentCounts {
        query: String,
        rec: String,
        cell: &'static str,
    },

    #[error("pair ({query}, {rec}) is absent from the co-purchase stats")]
    PairAbsent { query: String, rec: String },

    #[error("degenerate expected cell (zero marginal) in contingency table")]
    DegenerateCell,

    #[error("p-value {0} must lie strictly inside (0, 1)")]
    PValueOutOfRange(f64),

    #[error("catalog has {0} item(s); at least 2 are required to draw a negative")]
    CatalogTooSmall(usize),

    #[error("non-finite parameter detected after batch {batch_index} of epoch {epoch}")]
    NonFiniteParameter { epoch: usize, batch_index: usize },

    #[error("all {0} label(s) were skipped during evaluation")]
    AllLabelsSkipped(usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
