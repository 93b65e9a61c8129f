use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("incompatible plan bundle: masks/dose live on different grids")]
    GridMismatch,

    #[error("{0} is empty; dose statistics and DVH are undefined")]
    EmptyMask(String),

    #[error("dose threshold must be finite and >= 0 Gy, got {0}")]
    InvalidThreshold(f64),

    #[error("volume percentage must lie in (0, 100], got {0}")]
    InvalidPercent(f64),

    #[error("DVH bin width must be finite and > 0 Gy, got {0}")]
    InvalidBinWidth(f64),

    #[error("DVH bin widths differ ({0} Gy vs {1} Gy)")]
    BinWidthMismatch(f64, f64),

    #[error("homogeneity index undefined for {0}: D50 is 0 Gy")]
    UndefinedHomogeneity(String),

    #[error("structures {0} and {1} do not overlap")]
    Disjoint(String, String),

    #[error("point ({}, {}, {}) mm lies outside the planning grid", .0[0], .0[1], .0[2])]
    OutOfVolume([f64; 3]),

    #[error("duplicate structure name {0:?}")]
    DuplicateName(String),

    #[error("unknown structure {0:?}")]
    UnknownStructure(String),

    #[error("dose region {0:?} already exists")]
    RegionExists(String),

    #[error("slice index {index} out of range for {axis} axis with {len} slices")]
    SliceOutOfRange {
        axis: &'static str,
        index: usize,
        len: usize,
    },

    #[error("structure {0:?} has no set voxels")]
    EmptyStructure(String),

    #[error("prescription dose must be finite and > 0 Gy, got {0}")]
    InvalidPrescription(f64),

    #[error("missing bundle file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("{file}: expected {expected} bytes, found {actual}")]
    DimensionMismatch {
        file: String,
        expected: usize,
        actual: usize,
    },

    #[error("{file}: voxel {index} holds non-finite value")]
    NonFiniteDose { file: String, index: usize },

    #[error("{file}: voxel {index} holds negative dose {value}")]
    NegativeDose {
        file: String,
        index: usize,
        value: f32,
    },

    #[error("{file}: voxel {index} holds mask byte {value}, expected 0 or 1")]
    InvalidMaskByte {
        file: String,
        index: usize,
        value: u8,
    },

    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),

    #[error("shape {0:?} extends outside the grid")]
    ShapeOutsideGrid(String),

    #[error("shape {0:?} rasterizes to zero voxels")]
    EmptyShape(String),

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable code, used in service responses and CLI messages.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch => "grid_mismatch",
            Error::EmptyMask(_) => "empty_mask",
            Error::InvalidThreshold(_) => "invalid_threshold",
            Error::InvalidPercent(_) => "invalid_percent",
            Error::InvalidBinWidth(_) => "invalid_bin_width",
            Error::BinWidthMismatch(..) => "bin_width_mismatch",
            Error::UndefinedHomogeneity(_) => "undefined_hi",
            Error::Disjoint(..) => "disjoint_pair",
            Error::OutOfVolume(_) => "out_of_volume",
            Error::DuplicateName(_) => "duplicate_name",
            Error::UnknownStructure(_) => "unknown_structure",
            Error::RegionExists(_) => "region_exists",
            Error::SliceOutOfRange { .. } => "slice_out_of_range",
            Error::EmptyStructure(_) => "empty_structure",
            Error::InvalidPrescription(_) => "invalid_prescription",
            Error::MissingFile(_) => "missing_file",
            Error::Manifest(_) => "manifest",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFiniteDose { .. } => "non_finite_dose",
            Error::NegativeDose { .. } => "negative_dose",
            Error::InvalidMaskByte { .. } => "invalid_mask_byte",
            Error::InvalidPhantom(_) => "invalid_phantom",
            Error::ShapeOutsideGrid(_) => "shape_outside_grid",
            Error::EmptyShape(_) => "empty_shape",
            Error::InvalidFilter(_) => "invalid_filter",
            Error::InvalidRequest(_) => "invalid_request",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
