use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] fedtopics_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A malformed cell or record; `line` is 1-based and counts the header.
    #[error("{}:{line}: column `{column}`: {message}", path.display())]
    Parse { path: PathBuf, line: u64, column: String, message: String },
    #[error("{}: duplicate date {date} (lines {first} and {line})", path.display())]
    DuplicateDate { path: PathBuf, date: NaiveDate, first: u64, line: u64 },
    #[error("stage `{stage}` needs `{artifact}`; run `{producer}` first")]
    MissingArtifact { stage: &'static str, producer: &'static str, artifact: String },
    #[error("artifact `{artifact}` changed since `{producer}` wrote it; rerun `{producer}`")]
    StaleDigest { producer: &'static str, artifact: String },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.into(), source }
    }

    /// Process exit status: 3 for numerical failures, 2 for everything a
    /// user can fix by changing inputs or configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}
