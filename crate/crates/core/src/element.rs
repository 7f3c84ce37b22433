//! Typed element access on shared byte buffers.
//!
//! Buffers are viewed as `&[Cell<u8>]` so that several strided operands may
//! alias the same bytes while a kernel runs.

use core::cell::Cell;

use half::f16;
use num_complex::Complex;

use crate::dtype::{ByteOrder, DType, Kind};
use crate::scalar::Scalar;

/// One operand of a kernel: a byte buffer interpreted with a dtype and byte
/// order. Byte offsets are supplied per access by the iteration plan.
#[derive(Clone, Copy)]
pub struct Operand<'a> {
    pub bytes: &'a [Cell<u8>],
    pub dtype: DType,
    pub order: ByteOrder,
}

impl<'a> Operand<'a> {
    pub fn new(bytes: &'a [Cell<u8>], dtype: DType, order: ByteOrder) -> Self {
        Operand { bytes, dtype, order }
    }

    pub fn native(bytes: &'a [Cell<u8>], dtype: DType) -> Self {
        Operand { bytes, dtype, order: ByteOrder::NATIVE }
    }

    #[inline]
    fn swapped(&self) -> bool {
        !self.order.is_native()
    }

    /// Read one real component of `N` bytes in native order.
    #[inline]
    fn read<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut out = [0u8; N];
        let src = &self.bytes[off..off + N];
        if self.swapped() {
            for (o, c) in out.iter_mut().zip(src.iter().rev()) {
                *o = c.get();
            }
        } else {
            for (o, c) in out.iter_mut().zip(src) {
                *o = c.get();
            }
        }
        out
    }

    #[inline]
    fn write<const N: usize>(&self, off: usize, raw: [u8; N]) {
        let dst = &self.bytes[off..off + N];
        if self.swapped() {
            for (c, b) in dst.iter().rev().zip(raw) {
                c.set(b);
            }
        } else {
            for (c, b) in dst.iter().zip(raw) {
                c.set(b);
            }
        }
    }

    pub fn load_scalar(&self, off: usize) -> Scalar {
        match self.dtype.kind() {
            Kind::Bool => Scalar::Bool(bool::load(self, off)),
            Kind::Signed => Scalar::Int(i64::load(self, off)),
            Kind::Unsigned => Scalar::UInt(u64::load(self, off)),
            Kind::Float => Scalar::Float(match self.dtype {
                DType::Double => f64::load(self, off),
                _ => f32::load(self, off) as f64,
            }),
            Kind::Complex => {
                let c = match self.dtype {
                    DType::ComplexDouble => Complex::<f64>::load(self, off),
                    _ => {
                        let c = Complex::<f32>::load(self, off);
                        Complex::new(c.re as f64, c.im as f64)
                    }
                };
                Scalar::Complex(c.re, c.im)
            }
        }
    }

    /// Store a scalar that is already in canonical form for this dtype.
    pub fn store_scalar(&self, off: usize, value: Scalar) {
        match (self.dtype.kind(), value) {
            (Kind::Bool, v) => v.is_nonzero().store(self, off),
            (Kind::Signed, Scalar::Int(v)) => v.store(self, off),
            (Kind::Unsigned, Scalar::UInt(v)) => v.store(self, off),
            (Kind::Float, Scalar::Float(x)) => match self.dtype {
                DType::Double => x.store(self, off),
                _ => (x as f32).store(self, off),
            },
            (Kind::Complex, Scalar::Complex(re, im)) => match self.dtype {
                DType::ComplexDouble => Complex::new(re, im).store(self, off),
                _ => Complex::new(re as f32, im as f32).store(self, off),
            },
            (_, v) => {
                let (v, _) = crate::scalar::convert(v, self.dtype);
                self.store_scalar(off, v)
            }
        }
    }

    /// Reverse the bytes of every component of the element at `off`.
    pub fn swap_element(&self, off: usize) {
        let n = self.dtype.component_size();
        let parts = self.dtype.size() / n;
        for p in 0..parts {
            let s = &self.bytes[off + p * n..off + (p + 1) * n];
            for i in 0..n / 2 {
                s[i].swap(&s[n - 1 - i]);
            }
        }
    }
}

/// A compute type that kernels operate in. Each implementation handles every
/// dtype of one widened class (e.g. `i64` for all signed integers).
pub trait Element: Copy + PartialEq + 'static {
    fn load(op: &Operand<'_>, off: usize) -> Self;
    /// Narrow to the operand's dtype (wrapping or rounding) and write.
    fn store(self, op: &Operand<'_>, off: usize);
}

impl Element for bool {
    #[inline]
    fn load(op: &Operand<'_>, off: usize) -> Self {
        op.bytes[off].get() != 0
    }
    #[inline]
    fn store(self, op: &Operand<'_>, off: usize) {
        op.bytes[off].set(self as u8)
    }
}

impl Element for i64 {
    #[inline]
    fn load(op: &Operand<'_>, off: usize) -> Self {
        match op.dtype.size() {
            1 => i8::from_ne_bytes(op.read::<1>(off)) as i64,
            2 => i16::from_ne_bytes(op.read::<2>(off)) as i64,
            4 => i32::from_ne_bytes(op.read::<4>(off)) as i64,
            _ => i64::from_ne_bytes(op.read::<8>(off)),
        }
    }
    #[inline]
    fn store(self, op: &Operand<'_>, off: usize) {
        match op.dtype.size() {
            1 => op.write(off, (self as i8).to_ne_bytes()),
            2 => op.write(off, (self as i16).to_ne_bytes()),
            4 => op.write(off, (self as i32).to_ne_bytes()),
            _ => op.write(off, self.to_ne_bytes()),
        }
    }
}

impl Element for u64 {
    #[inline]
    fn load(op: &Operand<'_>, off: usize) -> Self {
        match op.dtype.size() {
            1 => u8::from_ne_bytes(op.read::<1>(off)) as u64,
            2 => u16::from_ne_bytes(op.read::<2>(off)) as u64,
            4 => u32::from_ne_bytes(op.read::<4>(off)) as u64,
            _ => u64::from_ne_bytes(op.read::<8>(off)),
        }
    }
    #[inline]
    fn store(self, op: &Operand<'_>, off: usize) {
        match op.dtype.size() {
            1 => op.write(off, (self as u8).to_ne_bytes()),
            2 => op.write(off, (self as u16).to_ne_bytes()),
            4 => op.write(off, (self as u32).to_ne_bytes()),
            _ => op.write(off, self.to_ne_bytes()),
        }
    }
}

impl Element for f32 {
    #[inline]
    fn load(op: &Operand<'_>, off: usize) -> Self {
        if op.dtype.component_size() == 2 {
            f16::from_bits(u16::from_ne_bytes(op.read::<2>(off))).to_f32()
        } else {
            f32::from_ne_bytes(op.read::<4>(off))
        }
    }
    #[inline]
    fn store(self, op: &Operand<'_>, off: usize) {
        if op.dtype.component_size() == 2 {
            op.write(off, f16::from_f32(self).to_bits().to_ne_bytes())
        } else {
            op.write(off, self.to_ne_bytes())
        }
    }
}

impl Element for f64 {
    #[inline]
    fn load(op: &Operand<'_>, off: usize) -> Self {
        f64::from_ne_bytes(op.read::<8>(off))
    }
    #[inline]
    fn store(self, op: &Operand<'_>, off: usize) {
        op.write(off, self.to_ne_bytes())
    }
}

impl Element for Complex<f32> {
    #[inline]
    fn load(op: &Operand<'_>, off: usize) -> Self {
        let step = op.dtype.component_size();
        Complex::new(f32::load(op, off), f32::load(op, off + step))
    }
    #[inline]
    fn store(self, op: &Operand<'_>, off: usize) {
        let step = op.dtype.component_size();
        self.re.store(op, off);
        self.im.store(op, off + step);
    }
}

impl Element for Complex<f64> {
    #[inline]
    fn load(op: &Operand<'_>, off: usize) -> Self {
        Complex::new(f64::load(op, off), f64::load(op, off + 8))
    }
    #[inline]
    fn store(self, op: &Operand<'_>, off: usize) {
        self.re.store(op, off);
        self.im.store(op, off + 8);
    }
}
