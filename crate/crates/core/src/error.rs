use thiserror::Error;

/// Everything that can go wrong inside the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("wrap is disabled but no reservoir field was supplied")]
    MissingReservoir,

    #[error("mosaic piece {piece} leaves the lattice with wrap disabled")]
    PieceOutOfBounds { piece: usize },

    #[error("unsupported image format: {0}")]
    Format(String),

    #[error(transparent)]
    Dump(#[from] DumpError),

    #[error("channel {channel} has degenerate std {std:e}; cannot rescale")]
    DegenerateChannel { channel: usize, std: f64 },

    #[error("design matrix is rank deficient (smallest pivot {pivot:e}); latent channel variances {variances:?}")]
    Singular { pivot: f64, variances: [f64; 4] },

    #[error("too few frames or rows: need at least {needed}, got {got}")]
    TooFew { needed: usize, got: usize },

    #[error("slice has no valid edges in any time row")]
    DegenerateSlice,

    #[error("backend is not deterministic: {0}")]
    Determinism(String),

    #[error("latent grid alignment: {0}")]
    Alignment(String),

    #[error("backend failure{}: {source}", frame.map(|f| format!(" at frame {f}")).unwrap_or_default())]
    Backend {
        frame: Option<usize>,
        #[source]
        source: BackendError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Latent dump decoding failures.
#[derive(Debug, Error)]
pub enum DumpError {
    #[error("bad magic {0:?}, expected \"NCLF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported dump version {0}")]
    Version(u32),
    #[error("truncated payload: header claims {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("header is too short")]
    ShortHeader,
}

/// Transport or protocol failures talking to a backend.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(#[from] std::io::Error),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("remote error: {0}")]
    Remote(String),
}

impl Error {
    pub(crate) fn backend(frame: Option<usize>) -> impl FnOnce(BackendError) -> Error {
        move |source| Error::Backend { frame, source }
    }

    pub(crate) fn mismatch(expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Error {
        Error::ShapeMismatch {
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    /// Coarse class used by front ends to pick exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidShape(_)
            | Error::ShapeMismatch { .. }
            | Error::Alignment(_)
            | Error::TooFew { .. } => ErrorClass::Shape,
            Error::Range(_) | Error::MissingReservoir | Error::PieceOutOfBounds { .. } => {
                ErrorClass::Range
            }
            Error::Format(_) | Error::Dump(_) => ErrorClass::Format,
            Error::DegenerateChannel { .. } | Error::Singular { .. } | Error::DegenerateSlice => {
                ErrorClass::Numeric
            }
            Error::Determinism(_) | Error::Backend { .. } => ErrorClass::Backend,
            Error::Io(_) => ErrorClass::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Shape,
    Range,
    Format,
    Numeric,
    Backend,
    Io,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
