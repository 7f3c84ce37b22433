//! Element types and the implicit-promotion lattice.

use core::fmt;
use core::str::FromStr;

/// Element type of a tensor.
///
/// The discriminants are the wire codes used by the OTP1 file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum DType {
    Bool = 0,
    Int8 = 1,
    UInt8 = 2,
    Int16 = 3,
    UInt16 = 4,
    Int32 = 5,
    UInt32 = 6,
    Int64 = 7,
    UInt64 = 8,
    Half = 9,
    Float = 10,
    Double = 11,
    ComplexHalf = 12,
    ComplexFloat = 13,
    ComplexDouble = 14,
}

/// Coarse classification used by promotion and kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Kind {
    Bool,
    Signed,
    Unsigned,
    Float,
    Complex,
}

impl DType {
    pub const ALL: [DType; 15] = [
        DType::Bool,
        DType::Int8,
        DType::UInt8,
        DType::Int16,
        DType::UInt16,
        DType::Int32,
        DType::UInt32,
        DType::Int64,
        DType::UInt64,
        DType::Half,
        DType::Float,
        DType::Double,
        DType::ComplexHalf,
        DType::ComplexFloat,
        DType::ComplexDouble,
    ];

    pub const fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<DType> {
        DType::ALL.get(code as usize).copied()
    }

    pub const fn size(self) -> usize {
        use DType::*;
        match self {
            Bool | Int8 | UInt8 => 1,
            Int16 | UInt16 | Half => 2,
            Int32 | UInt32 | Float | ComplexHalf => 4,
            Int64 | UInt64 | Double | ComplexFloat => 8,
            ComplexDouble => 16,
        }
    }

    pub const fn kind(self) -> Kind {
        use DType::*;
        match self {
            Bool => Kind::Bool,
            Int8 | Int16 | Int32 | Int64 => Kind::Signed,
            UInt8 | UInt16 | UInt32 | UInt64 => Kind::Unsigned,
            Half | Float | Double => Kind::Float,
            ComplexHalf | ComplexFloat | ComplexDouble => Kind::Complex,
        }
    }

    /// Signed integers and all floating-point types.
    pub const fn is_signed(self) -> bool {
        matches!(self.kind(), Kind::Signed | Kind::Float | Kind::Complex)
    }

    /// True for real and complex floating-point types.
    pub const fn is_float(self) -> bool {
        matches!(self.kind(), Kind::Float | Kind::Complex)
    }

    pub const fn is_complex(self) -> bool {
        matches!(self.kind(), Kind::Complex)
    }

    pub const fn is_integer(self) -> bool {
        matches!(self.kind(), Kind::Signed | Kind::Unsigned)
    }

    /// Width in bytes of one real component. Equal to `size()` for real types.
    pub const fn component_size(self) -> usize {
        if self.is_complex() {
            self.size() / 2
        } else {
            self.size()
        }
    }

    /// The real type of one component: complex-float -> float, others unchanged.
    pub const fn real_part(self) -> DType {
        match self {
            DType::ComplexHalf => DType::Half,
            DType::ComplexFloat => DType::Float,
            DType::ComplexDouble => DType::Double,
            other => other,
        }
    }

    /// Complex type with the same component width, for floating-point types.
    pub const fn complex_variant(self) -> Option<DType> {
        match self {
            DType::Half | DType::ComplexHalf => Some(DType::ComplexHalf),
            DType::Float | DType::ComplexFloat => Some(DType::ComplexFloat),
            DType::Double | DType::ComplexDouble => Some(DType::ComplexDouble),
            _ => None,
        }
    }

    pub const fn name(self) -> &'static str {
        use DType::*;
        match self {
            Bool => "bool",
            Int8 => "int8",
            UInt8 => "uint8",
            Int16 => "int16",
            UInt16 => "uint16",
            Int32 => "int32",
            UInt32 => "uint32",
            Int64 => "int64",
            UInt64 => "uint64",
            Half => "half",
            Float => "float",
            Double => "double",
            ComplexHalf => "chalf",
            ComplexFloat => "cfloat",
            ComplexDouble => "cdouble",
        }
    }

    fn signed_of_size(size: usize) -> Option<DType> {
        match size {
            1 => Some(DType::Int8),
            2 => Some(DType::Int16),
            4 => Some(DType::Int32),
            8 => Some(DType::Int64),
            _ => None,
        }
    }

    /// Smallest real float that represents every value of an integer type
    /// exactly, if any (64-bit integers have none).
    fn float_for_integer(self) -> Option<DType> {
        match self.size() {
            1 => Some(DType::Half),
            2 => Some(DType::Float),
            4 => Some(DType::Double),
            _ => None,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownDType;

impl fmt::Display for UnknownDType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown dtype name")
    }
}

impl FromStr for DType {
    type Err = UnknownDType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let d = match s {
            "bool" => DType::Bool,
            "int8" => DType::Int8,
            "uint8" => DType::UInt8,
            "int16" => DType::Int16,
            "uint16" => DType::UInt16,
            "int32" => DType::Int32,
            "uint32" => DType::UInt32,
            "int64" => DType::Int64,
            "uint64" => DType::UInt64,
            "half" | "float16" => DType::Half,
            "float" | "float32" => DType::Float,
            "double" | "float64" => DType::Double,
            "chalf" | "complex-half" => DType::ComplexHalf,
            "cfloat" | "complex-float" => DType::ComplexFloat,
            "cdouble" | "complex-double" => DType::ComplexDouble,
            _ => return Err(UnknownDType),
        };
        Ok(d)
    }
}

/// Implicit promotion of two element types.
///
/// Returns the smallest type able to hold every value of both inputs. When no
/// such type exists (a 64-bit integer meeting a float, or uint64 meeting a
/// signed integer) the result is double, or complex-double if either side is
/// complex.
pub fn promote(a: DType, b: DType) -> DType {
    use Kind::*;
    if a == b {
        return a;
    }
    let (lo, hi) = if a.kind() <= b.kind() { (a, b) } else { (b, a) };
    match (lo.kind(), hi.kind()) {
        (Bool, _) => hi,
        (Signed, Signed) | (Unsigned, Unsigned) => {
            if lo.size() >= hi.size() {
                lo
            } else {
                hi
            }
        }
        (Signed, Unsigned) => {
            if lo.size() > hi.size() {
                lo
            } else {
                DType::signed_of_size(hi.size() * 2).unwrap_or(DType::Double)
            }
        }
        (Signed | Unsigned, Float | Complex) => match lo.float_for_integer() {
            Some(f) => promote_floats(f, hi),
            None => wide_float(hi.is_complex()),
        },
        (Float | Complex, Float | Complex) => promote_floats(lo, hi),
        _ => unreachable!("kinds are ordered"),
    }
}

fn wide_float(complex: bool) -> DType {
    if complex {
        DType::ComplexDouble
    } else {
        DType::Double
    }
}

fn promote_floats(a: DType, b: DType) -> DType {
    let width = a.component_size().max(b.component_size());
    let real = match width {
        2 => DType::Half,
        4 => DType::Float,
        _ => DType::Double,
    };
    if a.is_complex() || b.is_complex() {
        real.complex_variant().unwrap_or(DType::ComplexDouble)
    } else {
        real
    }
}

/// Type used for arithmetic on values stored as `d`. Half-precision types are
/// stored at 16 bits per component but computed in single precision.
pub const fn widen_for_compute(d: DType) -> DType {
    match d {
        DType::Half => DType::Float,
        DType::ComplexHalf => DType::ComplexFloat,
        other => other,
    }
}

/// Behaviour of domain-sensitive functions such as square root or arccosine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MathMode {
    /// No checks; out-of-domain inputs produce NaN.
    #[default]
    Standard,
    /// Out-of-domain inputs produce NaN and a diagnostic.
    Warning,
    /// Out-of-domain inputs abort the call.
    Error,
    /// Out-of-domain inputs switch the result to a complex type.
    Complex,
}

impl FromStr for MathMode {
    type Err = UnknownDType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(MathMode::Standard),
            "warning" => Ok(MathMode::Warning),
            "error" => Ok(MathMode::Error),
            "complex" => Ok(MathMode::Complex),
            _ => Err(UnknownDType),
        }
    }
}

/// Byte order of stored elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    #[cfg(target_endian = "little")]
    pub const NATIVE: ByteOrder = ByteOrder::Little;
    #[cfg(target_endian = "big")]
    pub const NATIVE: ByteOrder = ByteOrder::Big;

    pub fn is_native(self) -> bool {
        self == ByteOrder::NATIVE
    }

    pub fn flipped(self) -> ByteOrder {
        match self {
            ByteOrder::Little => ByteOrder::Big,
            ByteOrder::Big => ByteOrder::Little,
        }
    }
}

impl fmt::Display for ByteOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ByteOrder::Little => "little",
            ByteOrder::Big => "big",
        })
    }
}
