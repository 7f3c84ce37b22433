//! Dense strided tensors over devices, streams and storage.
//!
//! Tensors are column-major views with signed byte strides over a
//! [`Storage`]. Operations resolve the output device and dtype, cast
//! operands implicitly (unless disabled with
//! [`status::set_implicit_casting`]), and dispatch to per-device function
//! tables in [`dispatch`].

pub mod cli;
pub mod devices;
pub mod dispatch;
pub mod error;
mod exec;
pub mod indexing;
pub mod interop;
pub mod ops;
pub mod qr;
pub mod status;
pub mod storage;
pub mod tensor;

pub use tidepool_core as core;
pub use tidepool_core::index::{BoundIndex, IndexArray, IndexAtom, IndexExpr, Mask, RangeSpec};
pub use tidepool_core::kernels::{BinaryOp, ReduceOp, UnaryOp};
pub use tidepool_core::{promote, ByteOrder, DType, Kind, Layout, MathMode, Scalar, MAX_DIMS};

pub use devices::{Device, Stream};
pub use error::{Error, ErrorCode, Result};
pub use interop::Foreign;
pub use ops::{Arg, IntoArg};
pub use storage::Storage;
pub use tensor::{Nested, Tensor};
