use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the tracking and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point at or behind the camera plane (camera-frame z = {z})")]
    BehindCamera { z: f64 },

    #[error("feature {index} projects from behind the camera (camera-frame z = {z})")]
    FeatureBehindCamera { index: usize, z: f64 },

    #[error("radial distortion inversion did not converge after {iterations} iterations")]
    DistortionInversion { iterations: usize },

    #[error("image is empty")]
    EmptyImage,

    #[error("image {width}x{height} is smaller than the {kernel}x{kernel} kernel")]
    ImageTooSmall {
        width: usize,
        height: usize,
        kernel: usize,
    },

    #[error("need at least {required} point correspondences, got {found}")]
    TooFewPoints { found: usize, required: usize },

    #[error("degenerate point configuration: {0}")]
    Degenerate(String),

    #[error("need at least one calibration view")]
    TooFewViews,

    #[error(
        "calibration is ill-conditioned (condition number {condition_number:.3e} over {views} view(s)); \
         use more views with distinct board orientations"
    )]
    IllConditioned { condition_number: f64, views: usize },

    #[error("flat neighborhood: structure tensor has no usable gradient (condition number {condition_number:.3e})")]
    NoGradient { condition_number: f64 },

    #[error("refinement neighborhood of radius {radius} around ({u:.2}, {v:.2}) leaves the image")]
    NeighborhoodOutOfBounds { u: f64, v: f64, radius: usize },

    #[error("insufficient correspondences: {found} matched, {required} required")]
    InsufficientCorrespondence { found: usize, required: usize },

    #[error("ambiguous target '{name}': {symmetry} maps the feature set onto itself")]
    AmbiguousTarget { name: String, symmetry: String },

    #[error("invalid target model: {0}")]
    InvalidModel(String),

    #[error("rotation too close to gimbal lock (|R31| = {r31})")]
    GimbalLock { r31: f64 },

    #[error("objective became non-finite")]
    NonFinite,

    #[error("no frame in the sequence could be fitted")]
    NoFittableFrame,

    #[error("matrix is not an invertible rigid transform: {0}")]
    NonInvertible(String),

    #[error("series too short: {found} samples, need {required}")]
    SeriesTooShort { found: usize, required: usize },

    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("missing cell at row {row}, column {col}")]
    MissingCell { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
