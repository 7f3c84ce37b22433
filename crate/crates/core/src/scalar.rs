//! Host scalar values and dtype conversion rules.

use core::fmt;

use half::f16;

use crate::dtype::{DType, Kind, MathMode};

/// A single value in its widest representation of the matching kind.
///
/// After `convert`, a scalar is in canonical form for the target dtype: the
/// variant matches the dtype's kind and the value is exactly representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    UInt(u64),
    Float(f64),
    Complex(f64, f64),
}

impl Scalar {
    /// The dtype a bare host value of this variant would carry.
    pub fn natural_dtype(self) -> DType {
        match self {
            Scalar::Bool(_) => DType::Bool,
            Scalar::Int(_) => DType::Int64,
            Scalar::UInt(_) => DType::UInt64,
            Scalar::Float(_) => DType::Double,
            Scalar::Complex(..) => DType::ComplexDouble,
        }
    }

    pub fn kind(self) -> Kind {
        match self {
            Scalar::Bool(_) => Kind::Bool,
            Scalar::Int(_) => Kind::Signed,
            Scalar::UInt(_) => Kind::Unsigned,
            Scalar::Float(_) => Kind::Float,
            Scalar::Complex(..) => Kind::Complex,
        }
    }

    /// Real value as f64 (real part for complex).
    pub fn as_f64(self) -> f64 {
        match self {
            Scalar::Bool(b) => b as u8 as f64,
            Scalar::Int(v) => v as f64,
            Scalar::UInt(v) => v as f64,
            Scalar::Float(x) => x,
            Scalar::Complex(re, _) => re,
        }
    }

    pub fn as_complex(self) -> (f64, f64) {
        match self {
            Scalar::Complex(re, im) => (re, im),
            other => (other.as_f64(), 0.0),
        }
    }

    pub fn is_nonzero(self) -> bool {
        match self {
            Scalar::Bool(b) => b,
            Scalar::Int(v) => v != 0,
            Scalar::UInt(v) => v != 0,
            Scalar::Float(x) => x != 0.0,
            Scalar::Complex(re, im) => re != 0.0 || im != 0.0,
        }
    }

    /// Bitwise equality, distinguishing NaN payloads and signed zeros.
    pub fn bit_eq(self, other: Scalar) -> bool {
        match (self, other) {
            (Scalar::Float(a), Scalar::Float(b)) => a.to_bits() == b.to_bits(),
            (Scalar::Complex(a, b), Scalar::Complex(c, d)) => {
                a.to_bits() == c.to_bits() && b.to_bits() == d.to_bits()
            }
            (a, b) => a == b,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::UInt(v) => write!(f, "{v}"),
            Scalar::Float(x) => write!(f, "{x}"),
            Scalar::Complex(re, im) => {
                if im.is_sign_negative() {
                    write!(f, "{re}-{}j", -im)
                } else {
                    write!(f, "{re}+{im}j")
                }
            }
        }
    }
}

macro_rules! scalar_from {
    ($($t:ty => $v:ident as $w:ty),* $(,)?) => {
        $(impl From<$t> for Scalar {
            fn from(x: $t) -> Self {
                Scalar::$v(x as $w)
            }
        })*
    };
}

scalar_from!(
    i8 => Int as i64, i16 => Int as i64, i32 => Int as i64, i64 => Int as i64,
    u8 => UInt as u64, u16 => UInt as u64, u32 => UInt as u64, u64 => UInt as u64,
    f32 => Float as f64, f64 => Float as f64,
);

impl From<bool> for Scalar {
    fn from(b: bool) -> Self {
        Scalar::Bool(b)
    }
}

impl From<num_complex::Complex<f64>> for Scalar {
    fn from(c: num_complex::Complex<f64>) -> Self {
        Scalar::Complex(c.re, c.im)
    }
}

/// Information lost while converting a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CastIssue {
    /// Integer result wrapped modulo 2^n.
    Wrapped,
    /// NaN converted to an integer (stored as 0).
    NanToInteger,
    /// A nonzero imaginary part was dropped.
    ImaginaryDiscarded,
    /// A finite value overflowed to infinity.
    Overflow,
}

impl fmt::Display for CastIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CastIssue::Wrapped => "integer value wrapped around",
            CastIssue::NanToInteger => "NaN converted to integer",
            CastIssue::ImaginaryDiscarded => "nonzero imaginary part discarded",
            CastIssue::Overflow => "finite value overflowed to infinity",
        })
    }
}

/// Conversion failed under the requested mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CastError {
    pub issue: CastIssue,
    pub to: DType,
}

impl fmt::Display for CastError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "conversion to {} failed: {}", self.to, self.issue)
    }
}

impl core::error::Error for CastError {}

fn wrap_integer(v: i128, to: DType) -> Scalar {
    let bits = 8 * to.size() as u32;
    let modulus_mask: u128 = if bits == 128 { u128::MAX } else { (1u128 << bits) - 1 };
    let low = (v as u128) & modulus_mask;
    if to.kind() == Kind::Signed {
        let shift = 128 - bits;
        Scalar::Int((((low << shift) as i128) >> shift) as i64)
    } else {
        Scalar::UInt(low as u64)
    }
}

fn integer_to(v: i128, to: DType) -> (Scalar, Option<CastIssue>) {
    let s = wrap_integer(v, to);
    let back = match s {
        Scalar::Int(x) => x as i128,
        Scalar::UInt(x) => x as i128,
        _ => unreachable!(),
    };
    (s, (back != v).then_some(CastIssue::Wrapped))
}

fn round_real(x: f64, to: DType) -> f64 {
    match to {
        DType::Half | DType::ComplexHalf => f16::from_f64(x).to_f64(),
        DType::Float | DType::ComplexFloat => x as f32 as f64,
        _ => x,
    }
}

fn int_to_real(v: i128, to: DType) -> f64 {
    match to {
        DType::Half | DType::ComplexHalf => f16::from_f32(v as f32).to_f64(),
        DType::Float | DType::ComplexFloat => v as f32 as f64,
        _ => v as f64,
    }
}

fn overflow(x: f64, y: f64) -> Option<CastIssue> {
    (x.is_finite() && y.is_infinite()).then_some(CastIssue::Overflow)
}

/// Convert `value` into canonical form for `to`, reporting any loss.
///
/// Floats convert to integers by rounding toward zero; out-of-range results
/// wrap modulo 2^n and NaN becomes 0. Complex values keep only their real
/// part when converted to a real type.
pub fn convert(value: Scalar, to: DType) -> (Scalar, Option<CastIssue>) {
    let (value, mut issue) = match (value, to.kind()) {
        (Scalar::Complex(re, im), k) if k != Kind::Complex && k != Kind::Bool => (
            Scalar::Float(re),
            (im != 0.0 || im.is_nan()).then_some(CastIssue::ImaginaryDiscarded),
        ),
        (v, _) => (v, None),
    };
    let (out, step_issue) = match to.kind() {
        Kind::Bool => (Scalar::Bool(value.is_nonzero()), None),
        Kind::Signed | Kind::Unsigned => match value {
            Scalar::Bool(b) => (wrap_integer(b as i128, to), None),
            Scalar::Int(v) => integer_to(v as i128, to),
            Scalar::UInt(v) => integer_to(v as i128, to),
            Scalar::Float(x) => {
                if x.is_nan() {
                    (wrap_integer(0, to), Some(CastIssue::NanToInteger))
                } else {
                    // `as` saturates at the i128 range before wrapping
                    integer_to(libm::trunc(x) as i128, to)
                }
            }
            Scalar::Complex(..) => unreachable!("handled above"),
        },
        Kind::Float => match value {
            Scalar::Bool(b) => (Scalar::Float(b as u8 as f64), None),
            Scalar::Int(v) => {
                let y = int_to_real(v as i128, to);
                (Scalar::Float(y), overflow(0.0, y))
            }
            Scalar::UInt(v) => {
                let y = int_to_real(v as i128, to);
                (Scalar::Float(y), overflow(0.0, y))
            }
            Scalar::Float(x) => {
                let y = round_real(x, to);
                (Scalar::Float(y), overflow(x, y))
            }
            Scalar::Complex(..) => unreachable!("handled above"),
        },
        Kind::Complex => {
            let (re, im) = match value {
                Scalar::Int(v) => (int_to_real(v as i128, to), 0.0),
                Scalar::UInt(v) => (int_to_real(v as i128, to), 0.0),
                other => {
                    let (re, im) = other.as_complex();
                    (round_real(re, to), round_real(im, to))
                }
            };
            let (x, y) = value.as_complex();
            let issue = overflow(x, re).or(overflow(y, im));
            (Scalar::Complex(re, im), issue)
        }
    };
    if issue.is_none() {
        issue = step_issue;
    }
    (out, issue)
}

/// Whether a conversion issue aborts the call under `mode`.
///
/// Error mode rejects every issue. Warning mode reports issues but only
/// rejects NaN-to-integer conversions.
pub fn is_fatal(issue: CastIssue, mode: MathMode) -> bool {
    match mode {
        MathMode::Error => true,
        MathMode::Warning => issue == CastIssue::NanToInteger,
        MathMode::Standard | MathMode::Complex => false,
    }
}

/// Convert a scalar under a math mode.
pub fn cast_scalar(value: Scalar, to: DType, mode: MathMode) -> Result<Scalar, CastError> {
    let (out, issue) = convert(value, to);
    match issue {
        Some(issue) if is_fatal(issue, mode) => Err(CastError { issue, to }),
        _ => Ok(out),
    }
}
