use std::path::PathBuf;

/// Errors raised anywhere in the simulation, learning, or experiment layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("integration diverged at point P{point} (t = {time:.4} s)")]
    IntegrationDiverged { point: usize, time: f64 },

    #[error("degenerate geometry: transmitter and receiver coincide")]
    GeometryDegenerate,

    #[error("array factor consistency violated: |a.w|^2 = {0} exceeds 1 under paper-literal normalization")]
    ArrayConsistency(f64),

    #[error("episode already finished; call reset first")]
    EpisodeFinished,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite training loss at step {step} (phase {phase}); {detail}")]
    NonFiniteLoss {
        step: usize,
        phase: usize,
        detail: String,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid config: {0}")]
    Validation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("no episodes to aggregate")]
    EmptyMetrics,

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for input problems (bad config, malformed files) as opposed to
    /// failures that happen while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation(_)
                | Error::Checkpoint(_)
                | Error::DimensionMismatch { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
