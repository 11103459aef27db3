use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{q} does not divide {l}")]
    NotADivisor { q: u32, l: u32 },

    #[error("table layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("requested particle number {requested} exceeds table truncation {n_max}")]
    ParticlesOutOfRange { requested: u32, n_max: u32 },

    #[error("imaginary residue {residue:e} exceeds tolerance while summing energies")]
    ImaginaryResidue { residue: f64 },

    #[error("multiplicity does not fit in 128 bits")]
    CountOverflow,

    #[error("corrupt table data: {0}")]
    Format(String),

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NotADivisor { .. } => "not-a-divisor",
            Error::LayoutMismatch(_) => "layout-mismatch",
            Error::ParticlesOutOfRange { .. } => "particles-out-of-range",
            Error::ImaginaryResidue { .. } => "imaginary-residue",
            Error::CountOverflow => "count-overflow",
            Error::Format(_) => "format",
            Error::Checksum(_) => "checksum",
            Error::Version { .. } => "version",
            Error::GridMismatch(_) => "grid-mismatch",
            Error::Undefined(_) => "undefined",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
