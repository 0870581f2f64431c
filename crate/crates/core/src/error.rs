use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty batch")]
    EmptyBatch,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("feature index {index} out of range for feature dimension {dim}")]
    IndexOutOfRange { index: u32, dim: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("class {class} has zero examples")]
    ZeroCount { class: usize },

    #[error("probability of the gold class is not positive ({prob})")]
    NonFiniteProb { prob: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}unknown label {label:?}", line_prefix(.line))]
    UnknownLabel { line: Option<usize>, label: String },

    #[error("{}: line {line}: malformed line: {reason}", .path.display())]
    MalformedLine { path: PathBuf, line: usize, reason: String },

    #[error("covariance matrix is singular; the comparison is degenerate")]
    SingularCovariance,

    #[error("not a model file (bad magic {0:?})")]
    BadMagic([u8; 4]),

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("model file truncated")]
    Truncated,

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn line_prefix(line: &Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
