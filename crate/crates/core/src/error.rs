use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate window: resolved bounds {lo} and {hi} coincide")]
    DegenerateWindow { lo: f64, hi: f64 },

    #[error("organ {organ} exceeds the phantom field of view")]
    SpecOutOfBounds { organ: String },

    #[error("label {0} is not present in the tissue table")]
    UnknownLabel(u16),

    #[error("mask selects no voxels")]
    EmptyMask,

    #[error("reference image contains no edges")]
    NoEdgesInReference,

    #[error("region of interest holds no {patch}x{patch} patch")]
    RoiTooSmall { patch: usize },

    #[error("spectra are sampled on different frequency bins")]
    BinMismatch,

    #[error("histograms use different bin edges")]
    EdgeMismatch,

    #[error("correlation undefined: one input has zero variance")]
    ZeroVariance,

    #[error("point ({0:.3}, {1:.3}, {2:.3}) mm lies outside the B-spline support")]
    OutOfSupport(f64, f64, f64),

    #[error("joint histogram has fewer than two occupied bins")]
    DegenerateHistogram,

    #[error("malformed RVOL data: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
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
}
