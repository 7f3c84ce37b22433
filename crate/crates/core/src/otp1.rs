//! OTP1 binary tensor format: header codec and payload sizing.
//!
//! Layout: magic `4F 54 50 01`, dtype code, byte order (0 little, 1 big),
//! ndim (0..=8), a reserved zero byte, `ndim` little-endian u64 extents,
//! then the column-major payload in the declared byte order.

use alloc::vec::Vec;
use core::fmt;

use crate::dtype::{ByteOrder, DType};
use crate::layout::{element_count, MAX_DIMS};

pub const MAGIC: [u8; 4] = [0x4F, 0x54, 0x50, 0x01];
pub const FIXED_HEADER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatError {
    BadMagic([u8; 4]),
    BadDtype(u8),
    BadByteorder(u8),
    TooManyDims(u8),
    ReservedNonZero(u8),
    /// Fewer bytes than the header or payload needs.
    Truncated { needed: usize, available: usize },
    TrailingBytes(usize),
    SizeOverflow,
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::BadMagic(m) => write!(
                f,
                "bad magic {:02X} {:02X} {:02X} {:02X}",
                m[0], m[1], m[2], m[3]
            ),
            FormatError::BadDtype(c) => write!(f, "unknown dtype code {c}"),
            FormatError::BadByteorder(c) => write!(f, "unknown byte order {c}"),
            FormatError::TooManyDims(n) => write!(f, "ndim {n} exceeds {MAX_DIMS}"),
            FormatError::ReservedNonZero(b) => write!(f, "reserved header byte is {b}, expected 0"),
            FormatError::Truncated { needed, available } => {
                write!(f, "truncated: need {needed} bytes, have {available}")
            }
            FormatError::TrailingBytes(n) => write!(f, "{n} unexpected trailing bytes"),
            FormatError::SizeOverflow => write!(f, "payload size overflows"),
        }
    }
}

impl core::error::Error for FormatError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub dtype: DType,
    pub order: ByteOrder,
    pub dims: Vec<usize>,
}

impl Header {
    pub fn header_len(&self) -> usize {
        FIXED_HEADER + 8 * self.dims.len()
    }

    pub fn payload_len(&self) -> Result<usize, FormatError> {
        element_count(&self.dims)
            .and_then(|n| n.checked_mul(self.dtype.size()))
            .ok_or(FormatError::SizeOverflow)
    }

    pub fn encode(&self) -> Vec<u8> {
        assert!(self.dims.len() <= MAX_DIMS, "too many dims for OTP1");
        let mut out = Vec::with_capacity(self.header_len());
        out.extend_from_slice(&MAGIC);
        out.push(self.dtype.code());
        out.push(match self.order {
            ByteOrder::Little => 0,
            ByteOrder::Big => 1,
        });
        out.push(self.dims.len() as u8);
        out.push(0);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out
    }

    /// Parse a header from the start of `bytes`. Returns the header and its
    /// encoded length.
    pub fn decode(bytes: &[u8]) -> Result<(Header, usize), FormatError> {
        let truncated = |needed| FormatError::Truncated { needed, available: bytes.len() };
        if bytes.len() < 4 {
            return Err(truncated(FIXED_HEADER));
        }
        let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        if bytes.len() < FIXED_HEADER {
            return Err(truncated(FIXED_HEADER));
        }
        let dtype = DType::from_code(bytes[4]).ok_or(FormatError::BadDtype(bytes[4]))?;
        let order = match bytes[5] {
            0 => ByteOrder::Little,
            1 => ByteOrder::Big,
            b => return Err(FormatError::BadByteorder(b)),
        };
        let ndim = bytes[6];
        if ndim as usize > MAX_DIMS {
            return Err(FormatError::TooManyDims(ndim));
        }
        if bytes[7] != 0 {
            return Err(FormatError::ReservedNonZero(bytes[7]));
        }
        let len = FIXED_HEADER + 8 * ndim as usize;
        if bytes.len() < len {
            return Err(truncated(len));
        }
        let dims = bytes[FIXED_HEADER..len]
            .chunks_exact(8)
            .map(|c| {
                let v = u64::from_le_bytes(c.try_into().unwrap());
                usize::try_from(v).map_err(|_| FormatError::SizeOverflow)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((Header { dtype, order, dims }, len))
    }
}

/// Split a complete OTP1 image into header and exact payload slice.
pub fn split(bytes: &[u8]) -> Result<(Header, &[u8]), FormatError> {
    let (h, len) = Header::decode(bytes)?;
    let need = len.checked_add(h.payload_len()?).ok_or(FormatError::SizeOverflow)?;
    if bytes.len() < need {
        return Err(FormatError::Truncated { needed: need, available: bytes.len() });
    }
    if bytes.len() > need {
        return Err(FormatError::TrailingBytes(bytes.len() - need));
    }
    Ok((h, &bytes[len..need]))
}
