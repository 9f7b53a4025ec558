use thiserror::Error;

/// Errors produced by the reconstruction pipeline and its stages.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty scene")]
    EmptyScene,

    #[error("empty frustum")]
    EmptyFrustum,

    #[error("empty point set")]
    EmptyPointSet,

    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),

    #[error(
        "backend shape mismatch: expected {expected_width}x{expected_height}, got {width}x{height}"
    )]
    BackendShapeMismatch {
        expected_width: u32,
        expected_height: u32,
        width: u32,
        height: u32,
    },

    #[error("inpaint backend failed for viewpoint {view:?}: {reason}")]
    BackendFailed { view: Option<usize>, reason: String },

    #[error("predictor shape mismatch: {0}")]
    PredictorShapeMismatch(String),

    #[error("normal predictor failed: {0}")]
    PredictorFailed(String),

    #[error("no observed depth to anchor the solve")]
    NoObservedDepth,

    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:e})"
    )]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("too few viewpoints succeeded: {succeeded} of {attempted} (need {required})")]
    TooFewViews {
        succeeded: usize,
        attempted: usize,
        required: usize,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BackendFailed { .. }
            | Error::BackendShapeMismatch { .. }
            | Error::PredictorFailed(_)
            | Error::PredictorShapeMismatch(_) => 3,
            Error::SolverDiverged { .. } | Error::NoObservedDepth => 4,
            // A run that loses too many views has almost always lost them to the backend.
            Error::TooFewViews { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
