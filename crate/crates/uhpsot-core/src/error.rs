use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate box")]
    DegenerateBox,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("patch smaller than one cell (patch {w}x{h}, cell {cell})")]
    PatchTooSmall { w: usize, h: usize, cell: usize },
    #[error("patch dims {w}x{h} not divisible by cell size {cell}")]
    CellMisaligned { w: usize, h: usize, cell: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("insufficient correspondences ({found} matched, need {need})")]
    InsufficientCorrespondences { found: usize, need: usize },
    #[error("degenerate geometry")]
    DegenerateGeometry,
    #[error("empty input")]
    EmptyInput,
    #[error("bad color-name table: {0}")]
    BadCnTable(String),
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("sequence layout error: {0}")]
    SequenceLayout(String),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
