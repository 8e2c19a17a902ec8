use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("invalid wavelength metadata: {0}")]
    Metadata(String),

    #[error("negative value {value:e} at index {index}")]
    NegativeData { index: usize, value: f64 },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("geometry mismatch: expected {expected}, found {found}")]
    GeometryMismatch { expected: String, found: String },

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("expected {expected} calibration images, got {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("kernel for band {band} sums to {sum:e}; column sums must be positive")]
    ZeroColumn { band: usize, sum: f64 },

    #[error("spot out of bounds for band {band}: {detail}")]
    SpotOutOfBounds { band: usize, detail: String },

    #[error("rgb scenes need exactly 3 bands, geometry has {w}")]
    BandMismatch { w: usize },

    #[error("system matrix too large: {requested} exceeds cap {cap}")]
    SizeCapExceeded { requested: usize, cap: usize },

    #[error("image has negative value {value:e} at index {index}")]
    NegativeImage { index: usize, value: f64 },

    #[error("reference datacube is all zero")]
    ZeroReference,

    #[error("every pixel of the reference is below the exclusion threshold")]
    AllPixelsExcluded,

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("unsupported container format: {0}")]
    FormatVersion(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error("payload checksum mismatch: header {expected:#010x}, payload {found:#010x}")]
    Checksum { expected: u32, found: u32 },

    #[error("image decode failed: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable category name, used by the CLI for machine-readable failures.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "DimensionError",
            Error::Metadata(_) => "MetadataError",
            Error::NegativeData { .. } => "NegativeDataError",
            Error::NonFinite { .. } => "NonFiniteError",
            Error::GeometryMismatch { .. } => "GeometryMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::CountMismatch { .. } => "CountMismatch",
            Error::ZeroColumn { .. } => "ZeroColumnError",
            Error::SpotOutOfBounds { .. } => "SpotOutOfBounds",
            Error::BandMismatch { .. } => "BandMismatch",
            Error::SizeCapExceeded { .. } => "SizeCapExceeded",
            Error::NegativeImage { .. } => "NegativeImageError",
            Error::ZeroReference => "ZeroReferenceError",
            Error::AllPixelsExcluded => "AllPixelsExcluded",
            Error::Config(_) => "ConfigError",
            Error::FormatVersion(_) => "FormatVersionError",
            Error::Format(_) => "FormatError",
            Error::Checksum { .. } => "ChecksumError",
            Error::Image(_) => "ImageError",
            Error::Csv(_) => "CsvError",
            Error::Io(_) => "IoError",
        }
    }
}
