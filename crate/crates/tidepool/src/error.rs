use thiserror::Error;

use tidepool_core::index::IndexError;
use tidepool_core::kernels::KernelError;
use tidepool_core::otp1::FormatError;
use tidepool_core::scalar::CastError;
use tidepool_core::{DType, LayoutError};

/// Stable numeric error codes, one per failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    Layout = 1,
    Index = 2,
    Kernel = 3,
    Format = 4,
    Io = 5,
    StrictMismatch = 10,
    ReadOnly = 11,
    ShapeMismatch = 12,
    InvalidArgument = 13,
    Unsupported = 14,
    OutOfMemory = 15,
    ImplNotLoaded = 20,
    OpNotProvided = 21,
    Registration = 22,
    UnknownExternalType = 30,
    ShallowUnsupported = 31,
    Injected = 40,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("implicit {what} conversion refused: implicit casting is disabled")]
    StrictMismatch { what: String },
    #[error("destination is read-only")]
    ReadOnly,
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("out of memory on {device}: requested {requested} bytes, {available} available")]
    OutOfMemory { device: String, requested: usize, available: usize },

    #[error("module {module} has no implementation loaded for device type {device_type}")]
    ImplNotLoaded { module: String, device_type: String },
    #[error("operation {op} is not provided by module {module} on device type {device_type}")]
    OpNotProvided { module: String, device_type: String, op: String },
    #[error("module registration: {0}")]
    Registration(String),

    #[error("unknown external type {0:?}")]
    UnknownExternalType(String),
    #[error("external type {0:?} cannot share memory with this tensor")]
    ShallowUnsupported(String),

    #[error("injected failure: {0}")]
    Injected(String),
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::Layout(_) => ErrorCode::Layout,
            Error::Index(_) => ErrorCode::Index,
            Error::Kernel(_) => ErrorCode::Kernel,
            Error::Format(_) => ErrorCode::Format,
            Error::Io(_) => ErrorCode::Io,
            Error::StrictMismatch { .. } => ErrorCode::StrictMismatch,
            Error::ReadOnly => ErrorCode::ReadOnly,
            Error::ShapeMismatch(..) => ErrorCode::ShapeMismatch,
            Error::InvalidArgument(_) => ErrorCode::InvalidArgument,
            Error::Unsupported(_) => ErrorCode::Unsupported,
            Error::OutOfMemory { .. } => ErrorCode::OutOfMemory,
            Error::ImplNotLoaded { .. } => ErrorCode::ImplNotLoaded,
            Error::OpNotProvided { .. } => ErrorCode::OpNotProvided,
            Error::Registration(_) => ErrorCode::Registration,
            Error::UnknownExternalType(_) => ErrorCode::UnknownExternalType,
            Error::ShallowUnsupported(_) => ErrorCode::ShallowUnsupported,
            Error::Injected(_) => ErrorCode::Injected,
        }
    }

    pub(crate) fn strict(from: DType, to: DType) -> Error {
        Error::StrictMismatch { what: format!("dtype {from} -> {to}") }
    }

    pub(crate) fn strict_device(from: &str, to: &str) -> Error {
        Error::StrictMismatch { what: format!("device {from} -> {to}") }
    }
}

impl From<CastError> for Error {
    fn from(e: CastError) -> Self {
        Error::Kernel(KernelError::Cast(e))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
