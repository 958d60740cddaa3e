use std::path::PathBuf;

/// Errors surfaced by the simulator, the environment and the training stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("fock cutoff must be at least 2, got {0}")]
    InvalidCutoff(usize),

    #[error("truncation deficit {deficit:.3e} exceeds tolerance {tolerance:.3e}")]
    Truncation { deficit: f64, tolerance: f64 },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("measurement outcome has probability {probability:.3e}, below the floor")]
    ZeroProbability { probability: f64 },

    #[error("mode index {mode} out of range for a {modes}-mode state")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("acceptance probability {0:.3e} below floor")]
    LowAcceptance(f64),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("plotting failed: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn file_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::File { path, source }
}
