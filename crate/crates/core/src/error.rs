use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("negative value {value} at index {index}")]
    Negative { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("observation of a one-bit at zero rate (pixel {row}, {col})")]
    ImpossibleObservation { row: usize, col: usize },

    #[error("threshold tile {tile_h}x{tile_w} too small: needs at least {required} cells")]
    TileTooSmall {
        tile_h: usize,
        tile_w: usize,
        required: usize,
    },

    #[error("non-finite objective at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("non-finite activation in layer {layer}")]
    LayerNonFinite { layer: usize },

    #[error("patch {patch}: {source}")]
    Patch {
        patch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("bad magic bytes in {0}")]
    BadMagic(String),

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u16, expected: u16 },

    #[error("unknown element type code {0}")]
    UnknownElementType(u8),

    #[error("expected rank {expected}, found {found}")]
    WrongRank { expected: usize, found: usize },

    #[error("dictionary patch dimension {0} is not a perfect square")]
    NotSquare(usize),

    #[error("truncated or malformed data: {0}")]
    Malformed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by numerics rather than bad input or configuration.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Diverged { .. } | Error::LayerNonFinite { .. } | Error::ImpossibleObservation { .. } => true,
            Error::Patch { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
