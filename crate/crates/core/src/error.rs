use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("tensor format error: {0}")]
    Format(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// `O_n - BG` has no positive mass; callers zero the channel.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } | Error::Format(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    /// The innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Attach a stage name to errors bubbling out of a pipeline step.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
