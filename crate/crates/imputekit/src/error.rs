use std::path::PathBuf;

/// Errors from file IO, configuration and the engines underneath.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// `row` is the 1-based line number; the header is line 1.
    #[error("{}: row {row} has {found} cells, expected {expected}", path.display())]
    RaggedRow { path: PathBuf, row: u64, expected: usize, found: usize },

    /// `row` is the 1-based line number, `col` the 1-based column.
    #[error("{}: row {row}, column {col}: `{token}` is neither a number nor NA", path.display())]
    BadCell { path: PathBuf, row: u64, col: usize, token: String },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] imputekit_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}
