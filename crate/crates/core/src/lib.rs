//! Core algorithms of the tidepool tensor library: dtypes and promotion,
//! scalar conversion, strided layouts, iteration plans, index binding and
//! device-independent kernels. No allocation of device memory happens here.
#![no_std]

extern crate alloc;

pub mod dtype;
pub mod element;
pub mod index;
pub mod kernels;
pub mod layout;
pub mod otp1;
pub mod plan;
pub mod scalar;

pub use dtype::{promote, ByteOrder, DType, Kind, MathMode};
pub use layout::{Layout, LayoutError, MAX_DIMS};
pub use scalar::Scalar;
