use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model parameters or pipeline configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called with inputs that violate its preconditions.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("simulation diverged at step {step}{}", member.map(|m| format!(" (ensemble member {m})")).unwrap_or_default())]
    SimulationDiverged { step: usize, member: Option<usize> },

    #[error("assimilation failed at step {step}: {reason}")]
    Assimilation { step: usize, reason: String },

    /// No optimizer start converged. `best` carries the best direction found.
    #[error("optimization failed: {reason}")]
    Optimization { reason: String, best: Vec<f64>, best_score: f64 },

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("missing upstream artifact {}", .0.display())]
    Dependency(PathBuf),

    #[error("stage `{stage}` is not supported for model `{model}`")]
    UnsupportedStage { stage: String, model: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed artifact {}: {reason}", path.display())]
    Parse { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnsupportedStage { .. } | Error::Json(_) => 2,
            Error::Argument(_) => 2,
            Error::SimulationDiverged { .. }
            | Error::Assimilation { .. }
            | Error::Optimization { .. }
            | Error::DegenerateDirection(_) => 3,
            Error::Dependency(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Io { .. } | Error::Parse { .. } => 1,
        }
    }
}
