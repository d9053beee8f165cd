use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    BadFile { path: PathBuf, message: String },

    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("duplicate post ({group_id}, {seq})")]
    DuplicatePost { group_id: String, seq: u64 },

    #[error("missing column {0}")]
    MissingColumn(String),

    #[error("unknown role {0}")]
    UnknownRole(String),

    #[error("no transcript files in {}", .0.display())]
    EmptyExport(PathBuf),

    #[error("invalid guid pattern {pattern}: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },

    #[error("need at least {needed} groups, found {found}")]
    TooFewGroups { needed: usize, found: usize },

    #[error("too many groups: {found} (at most {max})")]
    TooManyGroups { max: usize, found: usize },

    #[error("no common markers")]
    NoCommonMarkers,

    #[error("need at least 2 markers to section a corpus, found {0}")]
    TooFewMarkers(usize),

    #[error("section count mismatch: {left} vs {right}")]
    SectionCountMismatch { left: usize, right: usize },

    #[error("no post ({group_id}, {seq})")]
    UnknownPost { group_id: String, seq: u64 },

    #[error("unknown group {0}")]
    UnknownGroup(String),

    #[error("section {0} does not exist")]
    UnknownSection(usize),

    #[error("duplicate group {0}")]
    DuplicateGroup(String),

    #[error("missing {0}")]
    MissingArtifact(String),

    #[error("{stage} does not declare {artifact}")]
    UndeclaredArtifact { stage: String, artifact: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("invalid script: {0}")]
    Script(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attributes an error to a pipeline stage, once.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, below any stage attribution.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn bad_file(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::BadFile {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
