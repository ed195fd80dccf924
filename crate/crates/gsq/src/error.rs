use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector of dim >= 2 with (near-)zero norm cannot be projected to the sphere.
    #[error("degenerate vector: l2 norm below epsilon for dim >= 2")]
    DegenerateVector,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("code index {index} out of range for vocabulary {vocab}")]
    IndexOutOfRange { index: u32, vocab: usize },
    #[error("codebook is fixed; training operations are not allowed")]
    FixedCodebook,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid preset: {0}")]
    InvalidPreset(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fit failed to improve from any initialization")]
    DegenerateFit,
    #[error("normalized distance statistics undefined for dim 1")]
    DegenerateDim,
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("payload checksum mismatch")]
    ChecksumMismatch,
    #[error("unreadable image: {0}")]
    UnreadableImage(String),
    #[error("patch size {patch} exceeds image extent {height}x{width}")]
    PatchTooLarge {
        patch: usize,
        height: usize,
        width: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
