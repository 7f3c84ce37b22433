//! Device-independent kernels over byte buffers.
//!
//! Kernels take operands of matching dtype (except conversions) and an
//! iteration plan. They never allocate tensor memory; callers provide every
//! output buffer and resolve aliasing beforehand.

use alloc::vec::Vec;
use core::cell::Cell;
use core::fmt;

use num_complex::Complex;

use crate::dtype::{DType, Kind, MathMode};
use crate::element::{Element, Operand};
use crate::index::GatherPlan;
use crate::layout::Layout;
use crate::plan::{for_each_index, Plan};
use crate::scalar::{convert, is_fatal, CastError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Subtract,
    Multiply,
    Divide,
    Minimum,
    Maximum,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 6] = [
        BinaryOp::Add,
        BinaryOp::Subtract,
        BinaryOp::Multiply,
        BinaryOp::Divide,
        BinaryOp::Minimum,
        BinaryOp::Maximum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Subtract => "subtract",
            BinaryOp::Multiply => "multiply",
            BinaryOp::Divide => "divide",
            BinaryOp::Minimum => "minimum",
            BinaryOp::Maximum => "maximum",
        }
    }

    pub fn supports(self, d: DType) -> bool {
        match d.kind() {
            Kind::Bool => self != BinaryOp::Divide,
            Kind::Complex => !matches!(self, BinaryOp::Minimum | BinaryOp::Maximum),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Negate,
    Absolute,
    SquareRoot,
    Exponential,
    Logarithm,
    Sine,
    Cosine,
    Arcsine,
    Arccosine,
    Conjugate,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 10] = [
        UnaryOp::Negate,
        UnaryOp::Absolute,
        UnaryOp::SquareRoot,
        UnaryOp::Exponential,
        UnaryOp::Logarithm,
        UnaryOp::Sine,
        UnaryOp::Cosine,
        UnaryOp::Arcsine,
        UnaryOp::Arccosine,
        UnaryOp::Conjugate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Negate => "negate",
            UnaryOp::Absolute => "absolute",
            UnaryOp::SquareRoot => "square_root",
            UnaryOp::Exponential => "exponential",
            UnaryOp::Logarithm => "logarithm",
            UnaryOp::Sine => "sine",
            UnaryOp::Cosine => "cosine",
            UnaryOp::Arcsine => "arcsine",
            UnaryOp::Arccosine => "arccosine",
            UnaryOp::Conjugate => "conjugate",
        }
    }

    /// Transcendental functions defined only on floating-point values.
    pub fn is_float_function(self) -> bool {
        !matches!(self, UnaryOp::Negate | UnaryOp::Absolute | UnaryOp::Conjugate)
    }

    /// Functions whose real domain is a strict subset of the reals.
    pub fn is_domain_sensitive(self) -> bool {
        matches!(
            self,
            UnaryOp::SquareRoot | UnaryOp::Logarithm | UnaryOp::Arcsine | UnaryOp::Arccosine
        )
    }

    /// Whether a real input lies outside the real domain. NaN is in domain.
    pub fn out_of_domain(self, x: f64) -> bool {
        match self {
            UnaryOp::SquareRoot | UnaryOp::Logarithm => x < 0.0,
            UnaryOp::Arcsine | UnaryOp::Arccosine => x.abs() > 1.0,
            _ => false,
        }
    }

    pub fn supports(self, d: DType) -> bool {
        match d.kind() {
            Kind::Bool => !matches!(self, UnaryOp::Negate) && !self.is_float_function(),
            Kind::Signed | Kind::Unsigned => !self.is_float_function(),
            Kind::Float | Kind::Complex => true,
        }
    }

    /// Result dtype for an input of dtype `d` (already float for float
    /// functions): absolute value of a complex number is real.
    pub fn result_dtype(self, d: DType) -> DType {
        if self == UnaryOp::Absolute {
            d.real_part()
        } else {
            d
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReduceOp {
    Sum,
    Product,
    Minimum,
    Maximum,
    Any,
    All,
    /// p-norm, `f64::INFINITY` for the maximum norm.
    Norm(f64),
}

impl ReduceOp {
    pub fn name(self) -> &'static str {
        match self {
            ReduceOp::Sum => "sum",
            ReduceOp::Product => "product",
            ReduceOp::Minimum => "reduce_minimum",
            ReduceOp::Maximum => "reduce_maximum",
            ReduceOp::Any => "any",
            ReduceOp::All => "all",
            ReduceOp::Norm(_) => "norm",
        }
    }

    /// Output dtype for an input of dtype `d`.
    pub fn result_dtype(self, d: DType) -> DType {
        match self {
            ReduceOp::Sum | ReduceOp::Product => match d.kind() {
                Kind::Bool | Kind::Signed => DType::Int64,
                Kind::Unsigned => DType::UInt64,
                _ => d,
            },
            ReduceOp::Minimum | ReduceOp::Maximum => d,
            ReduceOp::Any | ReduceOp::All => DType::Bool,
            ReduceOp::Norm(_) => {
                if d.is_float() {
                    d.real_part()
                } else {
                    DType::Double
                }
            }
        }
    }

    pub fn supports(self, d: DType) -> bool {
        match self {
            ReduceOp::Minimum | ReduceOp::Maximum => !d.is_complex(),
            ReduceOp::Any | ReduceOp::All => d == DType::Bool,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelError {
    UnsupportedDType { op: &'static str, dtype: DType },
    DomainViolation { op: &'static str, count: u64 },
    IntegerDivisionByZero { count: u64 },
    Cast(CastError),
    EmptyReduction(&'static str),
    InvalidParameter(&'static str),
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelError::UnsupportedDType { op, dtype } => {
                write!(f, "{op} is not supported for dtype {dtype}")
            }
            KernelError::DomainViolation { op, count } => {
                write!(f, "{op}: {count} element(s) outside the function domain")
            }
            KernelError::IntegerDivisionByZero { count } => {
                write!(f, "integer division by zero in {count} element(s)")
            }
            KernelError::Cast(e) => e.fmt(f),
            KernelError::EmptyReduction(op) => write!(f, "{op} of an empty set has no identity"),
            KernelError::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
        }
    }
}

impl core::error::Error for KernelError {}

impl From<CastError> for KernelError {
    fn from(e: CastError) -> Self {
        KernelError::Cast(e)
    }
}

/// Non-fatal events counted by a kernel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Outcome {
    /// Domain violations or lossy conversions.
    pub issues: u64,
    pub div_by_zero: u64,
}

/// Compute types with the elementwise arithmetic the kernels need.
pub trait Arith: Element {
    fn zero() -> Self;
    /// Apply `op`; the flag reports an integer division by zero.
    fn binary(op: BinaryOp, a: Self, b: Self) -> (Self, bool);
    fn is_zero(self) -> bool {
        self == Self::zero()
    }
}

impl Arith for bool {
    fn zero() -> Self {
        false
    }
    #[inline]
    fn binary(op: BinaryOp, a: Self, b: Self) -> (Self, bool) {
        let r = match op {
            BinaryOp::Add | BinaryOp::Maximum => a | b,
            BinaryOp::Subtract => a ^ b,
            BinaryOp::Multiply | BinaryOp::Minimum => a & b,
            BinaryOp::Divide => unreachable!("checked by supports()"),
        };
        (r, false)
    }
}

macro_rules! int_arith {
    ($($t:ty),*) => {$(
        impl Arith for $t {
            fn zero() -> Self {
                0
            }
            #[inline]
            fn binary(op: BinaryOp, a: Self, b: Self) -> (Self, bool) {
                match op {
                    BinaryOp::Add => (a.wrapping_add(b), false),
                    BinaryOp::Subtract => (a.wrapping_sub(b), false),
                    BinaryOp::Multiply => (a.wrapping_mul(b), false),
                    BinaryOp::Divide if b == 0 => (0, true),
                    BinaryOp::Divide => (a.wrapping_div(b), false),
                    BinaryOp::Minimum => (a.min(b), false),
                    BinaryOp::Maximum => (a.max(b), false),
                }
            }
        }
    )*};
}

int_arith!(i64, u64);

macro_rules! float_arith {
    ($($t:ty),*) => {$(
        impl Arith for $t {
            fn zero() -> Self {
                0.0
            }
            #[inline]
            fn binary(op: BinaryOp, a: Self, b: Self) -> (Self, bool) {
                let r = match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Subtract => a - b,
                    BinaryOp::Multiply => a * b,
                    BinaryOp::Divide => a / b,
                    BinaryOp::Minimum => if a.is_nan() || b.is_nan() { <$t>::NAN } else { a.min(b) },
                    BinaryOp::Maximum => if a.is_nan() || b.is_nan() { <$t>::NAN } else { a.max(b) },
                };
                (r, false)
            }
        }
    )*};
}

float_arith!(f32, f64);

macro_rules! complex_arith {
    ($($t:ty),*) => {$(
        impl Arith for Complex<$t> {
            fn zero() -> Self {
                Complex::new(0.0, 0.0)
            }
            #[inline]
            fn binary(op: BinaryOp, a: Self, b: Self) -> (Self, bool) {
                let r = match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Subtract => a - b,
                    BinaryOp::Multiply => a * b,
                    BinaryOp::Divide => a / b,
                    BinaryOp::Minimum | BinaryOp::Maximum => unreachable!("checked by supports()"),
                };
                (r, false)
            }
        }
    )*};
}

complex_arith!(f32, f64);

/// Run `$body` with `$t` bound to the compute type of `$dtype`.
macro_rules! with_compute {
    ($dtype:expr, $t:ident => $body:expr) => {
        match $dtype {
            DType::Bool => {
                type $t = bool;
                $body
            }
            DType::Int8 | DType::Int16 | DType::Int32 | DType::Int64 => {
                type $t = i64;
                $body
            }
            DType::UInt8 | DType::UInt16 | DType::UInt32 | DType::UInt64 => {
                type $t = u64;
                $body
            }
            DType::Half | DType::Float => {
                type $t = f32;
                $body
            }
            DType::Double => {
                type $t = f64;
                $body
            }
            DType::ComplexHalf | DType::ComplexFloat => {
                type $t = Complex<f32>;
                $body
            }
            DType::ComplexDouble => {
                type $t = Complex<f64>;
                $body
            }
        }
    };
}

fn same_dtype(op: &'static str, a: DType, b: DType) -> Result<(), KernelError> {
    if a != b {
        return Err(KernelError::UnsupportedDType { op, dtype: b });
    }
    Ok(())
}

/// `out = a op b` elementwise. Plan views: out, a, b.
pub fn binary(
    op: BinaryOp,
    plan: &Plan,
    out: &Operand<'_>,
    a: &Operand<'_>,
    b: &Operand<'_>,
    mode: MathMode,
) -> Result<Outcome, KernelError> {
    same_dtype(op.name(), out.dtype, a.dtype)?;
    same_dtype(op.name(), out.dtype, b.dtype)?;
    if !op.supports(out.dtype) {
        return Err(KernelError::UnsupportedDType { op: op.name(), dtype: out.dtype });
    }
    if op == BinaryOp::Divide && out.dtype.is_integer() && mode == MathMode::Error {
        let mut zeros = 0u64;
        with_compute!(out.dtype, T => plan.for_each(|o| zeros += T::load(b, o[2]).is_zero() as u64));
        if zeros > 0 {
            return Err(KernelError::IntegerDivisionByZero { count: zeros });
        }
    }
    let mut dz = 0u64;
    with_compute!(out.dtype, T => plan.for_each(|o| {
        let (r, z) = T::binary(op, T::load(a, o[1]), T::load(b, o[2]));
        dz += z as u64;
        r.store(out, o[0]);
    }));
    Ok(Outcome { issues: 0, div_by_zero: dz })
}

trait Transcendental: Copy {
    fn apply(op: UnaryOp, x: Self) -> Self;
}

macro_rules! real_functions {
    ($t:ty, $sqrt:path, $exp:path, $log:path, $sin:path, $cos:path, $asin:path, $acos:path) => {
        impl Transcendental for $t {
            #[inline]
            fn apply(op: UnaryOp, x: Self) -> Self {
                match op {
                    UnaryOp::SquareRoot => $sqrt(x),
                    UnaryOp::Exponential => $exp(x),
                    UnaryOp::Logarithm => $log(x),
                    UnaryOp::Sine => $sin(x),
                    UnaryOp::Cosine => $cos(x),
                    UnaryOp::Arcsine => $asin(x),
                    UnaryOp::Arccosine => $acos(x),
                    UnaryOp::Negate => -x,
                    UnaryOp::Absolute => x.abs(),
                    UnaryOp::Conjugate => x,
                }
            }
        }
    };
}

real_functions!(f32, libm::sqrtf, libm::expf, libm::logf, libm::sinf, libm::cosf, libm::asinf, libm::acosf);
real_functions!(f64, libm::sqrt, libm::exp, libm::log, libm::sin, libm::cos, libm::asin, libm::acos);

macro_rules! complex_functions {
    ($($t:ty),*) => {$(
        impl Transcendental for Complex<$t> {
            #[inline]
            fn apply(op: UnaryOp, x: Self) -> Self {
                match op {
                    UnaryOp::SquareRoot => x.sqrt(),
                    UnaryOp::Exponential => x.exp(),
                    UnaryOp::Logarithm => x.ln(),
                    UnaryOp::Sine => x.sin(),
                    UnaryOp::Cosine => x.cos(),
                    UnaryOp::Arcsine => x.asin(),
                    UnaryOp::Arccosine => x.acos(),
                    UnaryOp::Negate => -x,
                    UnaryOp::Conjugate => x.conj(),
                    UnaryOp::Absolute => unreachable!("complex magnitude is real"),
                }
            }
        }
    )*};
}

complex_functions!(f32, f64);

/// Number of elements of a real floating-point operand outside the real
/// domain of `op`, read through plan view `view`. Zero for other dtypes.
pub fn domain_violations(op: UnaryOp, plan: &Plan, view: usize, a: &Operand<'_>) -> u64 {
    if !op.is_domain_sensitive() || a.dtype.kind() != Kind::Float {
        return 0;
    }
    let mut n = 0u64;
    match a.dtype {
        DType::Double => plan.for_each(|o| n += op.out_of_domain(f64::load(a, o[view])) as u64),
        _ => plan.for_each(|o| n += op.out_of_domain(f32::load(a, o[view]) as f64) as u64),
    }
    n
}

/// `out = op(a)` elementwise. Plan views: out, a.
///
/// Error mode rejects out-of-domain inputs before anything is written;
/// other modes produce NaN there and count the violations.
pub fn unary(
    op: UnaryOp,
    plan: &Plan,
    out: &Operand<'_>,
    a: &Operand<'_>,
    mode: MathMode,
) -> Result<Outcome, KernelError> {
    if !op.supports(a.dtype) {
        return Err(KernelError::UnsupportedDType { op: op.name(), dtype: a.dtype });
    }
    same_dtype(op.name(), op.result_dtype(a.dtype), out.dtype)?;
    let mut issues = 0;
    if mode != MathMode::Standard {
        issues = domain_violations(op, plan, 1, a);
        if issues > 0 && mode == MathMode::Error {
            return Err(KernelError::DomainViolation { op: op.name(), count: issues });
        }
    }
    match a.dtype.kind() {
        Kind::Bool => plan.for_each(|o| bool::load(a, o[1]).store(out, o[0])),
        Kind::Signed => plan.for_each(|o| {
            let x = i64::load(a, o[1]);
            let r = match op {
                UnaryOp::Negate => x.wrapping_neg(),
                UnaryOp::Absolute => x.wrapping_abs(),
                _ => x,
            };
            r.store(out, o[0]);
        }),
        Kind::Unsigned => plan.for_each(|o| {
            let x = u64::load(a, o[1]);
            let r = if op == UnaryOp::Negate { x.wrapping_neg() } else { x };
            r.store(out, o[0]);
        }),
        Kind::Float => match a.dtype {
            DType::Double => plan.for_each(|o| f64::apply(op, f64::load(a, o[1])).store(out, o[0])),
            _ => plan.for_each(|o| f32::apply(op, f32::load(a, o[1])).store(out, o[0])),
        },
        Kind::Complex if op == UnaryOp::Absolute => match a.dtype {
            DType::ComplexDouble => plan.for_each(|o| Complex::<f64>::load(a, o[1]).norm().store(out, o[0])),
            _ => plan.for_each(|o| Complex::<f32>::load(a, o[1]).norm().store(out, o[0])),
        },
        Kind::Complex => match a.dtype {
            DType::ComplexDouble => plan.for_each(|o| {
                Complex::<f64>::apply(op, Complex::<f64>::load(a, o[1])).store(out, o[0])
            }),
            _ => plan.for_each(|o| {
                Complex::<f32>::apply(op, Complex::<f32>::load(a, o[1])).store(out, o[0])
            }),
        },
    }
    Ok(Outcome { issues, div_by_zero: 0 })
}

#[inline]
fn copy_element(dst: &Operand<'_>, doff: usize, src: &Operand<'_>, soff: usize) {
    let size = src.dtype.size();
    let n = src.dtype.component_size();
    let mut raw = [0u8; 16];
    for (r, c) in raw[..size].iter_mut().zip(&src.bytes[soff..soff + size]) {
        *r = c.get();
    }
    if dst.order != src.order {
        for part in raw[..size].chunks_mut(n) {
            part.reverse();
        }
    }
    for (c, r) in dst.bytes[doff..doff + size].iter().zip(&raw[..size]) {
        c.set(*r);
    }
}

/// Copy `src` into `out`, converting dtype and byte order. Plan views:
/// out, src. Under warning and error modes the input is checked before
/// anything is written.
pub fn convert_copy(
    plan: &Plan,
    out: &Operand<'_>,
    src: &Operand<'_>,
    mode: MathMode,
) -> Result<Outcome, KernelError> {
    if out.dtype == src.dtype {
        plan.for_each(|o| copy_element(out, o[0], src, o[1]));
        return Ok(Outcome::default());
    }
    let mut issues = 0u64;
    if matches!(mode, MathMode::Warning | MathMode::Error) {
        let mut fatal = None;
        plan.for_each(|o| {
            if let (_, Some(issue)) = convert(src.load_scalar(o[1]), out.dtype) {
                issues += 1;
                if fatal.is_none() && is_fatal(issue, mode) {
                    fatal = Some(issue);
                }
            }
        });
        if let Some(issue) = fatal {
            return Err(CastError { issue, to: out.dtype }.into());
        }
        plan.for_each(|o| out.store_scalar(o[0], convert(src.load_scalar(o[1]), out.dtype).0));
    } else {
        plan.for_each(|o| {
            let (v, issue) = convert(src.load_scalar(o[1]), out.dtype);
            issues += issue.is_some() as u64;
            out.store_scalar(o[0], v);
        });
    }
    Ok(Outcome { issues, div_by_zero: 0 })
}

/// Set every element to `value`. Plan views: out.
pub fn fill(
    plan: &Plan,
    out: &Operand<'_>,
    value: Scalar,
    mode: MathMode,
) -> Result<Outcome, KernelError> {
    let (v, issue) = convert(value, out.dtype);
    if let Some(issue) = issue {
        if is_fatal(issue, mode) {
            return Err(CastError { issue, to: out.dtype }.into());
        }
    }
    let mut raw = [0u8; 16];
    let cells = Cell::from_mut(&mut raw[..]).as_slice_of_cells();
    let proto = Operand::new(cells, out.dtype, out.order);
    proto.store_scalar(0, v);
    plan.for_each(|o| copy_element(out, o[0], &proto, 0));
    Ok(Outcome { issues: issue.is_some() as u64, div_by_zero: 0 })
}

/// Write 0, 1, 2, ... in column-major index order of `layout`.
pub fn arange(layout: &Layout, out: &Operand<'_>) {
    let mut i = 0i64;
    for_each_index(layout, |_, off| {
        out.store_scalar(off as usize, convert(Scalar::Int(i), out.dtype).0);
        i += 1;
    });
}

/// Reverse the bytes of every component in place. Plan views: out.
pub fn byteswap(plan: &Plan, out: &Operand<'_>) {
    plan.for_each(|o| out.swap_element(o[0]));
}

/// Copy elements addressed by an index plan into `dst` (same dtype).
pub fn gather(plan: &GatherPlan, src: &Operand<'_>, dst_layout: &Layout, dst: &Operand<'_>) {
    plan.for_each_with(dst_layout, |s, d| copy_element(dst, d, src, s));
}

/// Write `src` (same dtype, laid out over the plan's dims) into the
/// elements addressed by an index plan.
pub fn scatter(plan: &GatherPlan, dst: &Operand<'_>, src_layout: &Layout, src: &Operand<'_>) {
    plan.for_each_with(src_layout, |d, s| copy_element(dst, d, src, s));
}

/// `out = a · b` for matrices (out m×n, a m×k, b k×n), accumulating in
/// index order of k.
pub fn matmul(
    out_layout: &Layout,
    a_layout: &Layout,
    b_layout: &Layout,
    out: &Operand<'_>,
    a: &Operand<'_>,
    b: &Operand<'_>,
) -> Result<Outcome, KernelError> {
    same_dtype("matmul", out.dtype, a.dtype)?;
    same_dtype("matmul", out.dtype, b.dtype)?;
    let (m, n, k) = (out_layout.dims[0], out_layout.dims[1], a_layout.dims[1]);
    assert!(a_layout.dims[0] == m && b_layout.dims == [k, n], "matmul shape mismatch");
    let at = |l: &Layout, i: usize, j: usize| l.offset_of(&[i, j]) as usize;
    with_compute!(out.dtype, T => {
        for j in 0..n {
            for i in 0..m {
                let mut acc = T::zero();
                for p in 0..k {
                    let x = T::load(a, at(a_layout, i, p));
                    let y = T::load(b, at(b_layout, p, j));
                    let (prod, _) = T::binary(BinaryOp::Multiply, x, y);
                    acc = if p == 0 { prod } else { T::binary(BinaryOp::Add, acc, prod).0 };
                }
                acc.store(out, at(out_layout, i, j));
            }
        }
    });
    Ok(Outcome::default())
}

/// Correctly rounded floating-point summation (Shewchuk partials).
#[derive(Debug, Default, Clone)]
pub struct ExactSum {
    partials: Vec<f64>,
    special: f64,
    has_special: bool,
}

impl ExactSum {
    pub fn new() -> ExactSum {
        ExactSum::default()
    }

    pub fn clear(&mut self) {
        self.partials.clear();
        self.special = 0.0;
        self.has_special = false;
    }

    pub fn add(&mut self, mut x: f64) {
        if !x.is_finite() {
            self.special += x;
            self.has_special = true;
            return;
        }
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                core::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn value(&self) -> f64 {
        if self.has_special {
            return self.special;
        }
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

enum Acc {
    NormMax(f64),
    Int(i64),
    UInt(u64),
    Bool(bool),
    Real(f64),
    Complex(Complex<f64>),
    Sum(ExactSum, ExactSum),
}

/// Reduce `input` over the axes flagged in `axes`; `out_layout` has the
/// remaining axes in order.
pub fn reduce(
    op: ReduceOp,
    in_layout: &Layout,
    axes: &[bool],
    out_layout: &Layout,
    input: &Operand<'_>,
    out: &Operand<'_>,
) -> Result<Outcome, KernelError> {
    let d = input.dtype;
    if !op.supports(d) {
        return Err(KernelError::UnsupportedDType { op: op.name(), dtype: d });
    }
    same_dtype(op.name(), op.result_dtype(d), out.dtype)?;
    if let ReduceOp::Norm(p) = op {
        if !(p > 0.0) {
            return Err(KernelError::InvalidParameter("norm order must be positive"));
        }
    }
    let pick = |keep: bool| -> (Vec<usize>, Vec<isize>) {
        in_layout
            .dims
            .iter()
            .zip(&in_layout.strides)
            .zip(axes)
            .filter(|(_, &r)| r != keep)
            .map(|((&d, &s), _)| (d, s))
            .unzip()
    };
    let (kd, ks) = pick(true);
    let (rd, rs) = pick(false);
    let kept = Layout { offset: in_layout.offset, dims: kd, strides: ks };
    let red = Layout { offset: 0, dims: rd, strides: rs };
    if red.is_empty() && matches!(op, ReduceOp::Minimum | ReduceOp::Maximum) && !kept.is_empty() {
        return Err(KernelError::EmptyReduction(op.name()));
    }
    let mut red_plan = Plan::canonical(&[&red]);
    let outer = Plan::canonical(&[out_layout, &kept]);
    outer.for_each(|o| {
        red_plan.rebase(&[o[1] as isize]);
        let init = match (op, d.kind()) {
            (ReduceOp::Norm(p), _) if p == f64::INFINITY => Acc::NormMax(0.0),
            (ReduceOp::Sum, Kind::Float | Kind::Complex) | (ReduceOp::Norm(_), _) => {
                Acc::Sum(ExactSum::new(), ExactSum::new())
            }
            (ReduceOp::Sum, Kind::Bool | Kind::Signed) => Acc::Int(0),
            (ReduceOp::Sum, Kind::Unsigned) => Acc::UInt(0),
            (ReduceOp::Product, Kind::Bool | Kind::Signed) => Acc::Int(1),
            (ReduceOp::Product, Kind::Unsigned) => Acc::UInt(1),
            (ReduceOp::Product, Kind::Float) => Acc::Real(1.0),
            (ReduceOp::Product, Kind::Complex) => Acc::Complex(Complex::new(1.0, 0.0)),
            (ReduceOp::Any, _) => Acc::Bool(false),
            (ReduceOp::All, _) => Acc::Bool(true),
            (ReduceOp::Minimum | ReduceOp::Maximum, _) => {
                let first = input.load_scalar(o[1]);
                match first {
                    Scalar::Bool(b) => Acc::Bool(b),
                    Scalar::Int(v) => Acc::Int(v),
                    Scalar::UInt(v) => Acc::UInt(v),
                    _ => Acc::Real(first.as_f64()),
                }
            }
        };
        let mut acc = init;
        let is_max = op == ReduceOp::Maximum;
        red_plan.for_each(|r| {
            let v = input.load_scalar(r[0]);
            match (&mut acc, op) {
                (Acc::Sum(re, im), ReduceOp::Sum) => {
                    let (x, y) = v.as_complex();
                    re.add(x);
                    im.add(y);
                }
                (Acc::NormMax(a), _) => {
                    let (x, y) = v.as_complex();
                    let m = libm::hypot(x, y);
                    *a = if a.is_nan() || m.is_nan() { f64::NAN } else { a.max(m) };
                }
                (Acc::Sum(s, _), ReduceOp::Norm(p)) => {
                    let (x, y) = v.as_complex();
                    let m = libm::hypot(x, y);
                    if p == 1.0 {
                        s.add(m);
                    } else if p == 2.0 {
                        s.add(m * m);
                    } else {
                        s.add(libm::pow(m, p));
                    }
                }
                (Acc::Int(a), ReduceOp::Sum) => *a = a.wrapping_add(int_of(v)),
                (Acc::UInt(a), ReduceOp::Sum) => *a = a.wrapping_add(uint_of(v)),
                (Acc::Int(a), ReduceOp::Product) => *a = a.wrapping_mul(int_of(v)),
                (Acc::UInt(a), ReduceOp::Product) => *a = a.wrapping_mul(uint_of(v)),
                (Acc::Real(a), ReduceOp::Product) => *a *= v.as_f64(),
                (Acc::Complex(a), ReduceOp::Product) => {
                    let (x, y) = v.as_complex();
                    *a *= Complex::new(x, y);
                }
                (Acc::Bool(a), ReduceOp::Any) => *a |= v.is_nonzero(),
                (Acc::Bool(a), ReduceOp::All) => *a &= v.is_nonzero(),
                (Acc::Bool(a), _) => {
                    *a = if is_max { *a | v.is_nonzero() } else { *a & v.is_nonzero() }
                }
                (Acc::Int(a), _) => {
                    let x = int_of(v);
                    *a = if is_max { (*a).max(x) } else { (*a).min(x) };
                }
                (Acc::UInt(a), _) => {
                    let x = uint_of(v);
                    *a = if is_max { (*a).max(x) } else { (*a).min(x) };
                }
                (Acc::Real(a), _) => {
                    let x = v.as_f64();
                    *a = if a.is_nan() || x.is_nan() {
                        f64::NAN
                    } else if is_max {
                        a.max(x)
                    } else {
                        a.min(x)
                    };
                }
                _ => unreachable!("accumulator matches op"),
            }
        });
        let result = match acc {
            Acc::Sum(re, im) => {
                match op {
                    ReduceOp::Norm(p) if p == 1.0 => Scalar::Float(re.value()),
                    ReduceOp::Norm(p) if p == 2.0 => Scalar::Float(libm::sqrt(re.value())),
                    ReduceOp::Norm(p) => Scalar::Float(libm::pow(re.value(), 1.0 / p)),
                    _ if d.is_complex() => Scalar::Complex(re.value(), im.value()),
                    _ => Scalar::Float(re.value()),
                }
            }
            Acc::NormMax(m) => Scalar::Float(m),
            Acc::Int(v) => Scalar::Int(v),
            Acc::UInt(v) => Scalar::UInt(v),
            Acc::Bool(b) => Scalar::Bool(b),
            Acc::Real(x) => Scalar::Float(x),
            Acc::Complex(c) => Scalar::Complex(c.re, c.im),
        };
        out.store_scalar(o[0], convert(result, out.dtype).0);
    });
    Ok(Outcome::default())
}

fn int_of(v: Scalar) -> i64 {
    match v {
        Scalar::Bool(b) => b as i64,
        Scalar::Int(x) => x,
        Scalar::UInt(x) => x as i64,
        other => other.as_f64() as i64,
    }
}

fn uint_of(v: Scalar) -> u64 {
    match v {
        Scalar::Bool(b) => b as u64,
        Scalar::UInt(x) => x,
        Scalar::Int(x) => x as u64,
        other => other.as_f64() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    struct Buf {
        raw: Vec<u8>,
        dtype: DType,
        layout: Layout,
    }

    impl Buf {
        fn new(dtype: DType, dims: &[usize]) -> Buf {
            let layout = Layout::contiguous(dims, dtype.size()).unwrap();
            Buf { raw: vec![0; layout.numel() * dtype.size()], dtype, layout }
        }

        fn from(dtype: DType, dims: &[usize], values: &[Scalar]) -> Buf {
            let mut b = Buf::new(dtype, dims);
            let sz = dtype.size();
            let op = b.op();
            for (i, v) in values.iter().enumerate() {
                op.store_scalar(i * sz, convert(*v, dtype).0);
            }
            b
        }

        fn op(&mut self) -> Operand<'_> {
            Operand::native(Cell::from_mut(&mut self.raw[..]).as_slice_of_cells(), self.dtype)
        }

        fn values(&mut self) -> Vec<Scalar> {
            let sz = self.dtype.size();
            let n = self.layout.numel();
            let op = self.op();
            (0..n).map(|i| op.load_scalar(i * sz)).collect()
        }
    }

    fn ints(v: &[i64]) -> Vec<Scalar> {
        v.iter().map(|&x| Scalar::Int(x)).collect()
    }

    fn floats(v: &[f64]) -> Vec<Scalar> {
        v.iter().map(|&x| Scalar::Float(x)).collect()
    }

    #[test]
    fn integer_add_wraps_and_divide_by_zero_counts() {
        let mut a = Buf::from(DType::Int8, &[3], &ints(&[100, 5, -7]));
        let mut b = Buf::from(DType::Int8, &[3], &ints(&[100, 0, 2]));
        let mut c = Buf::new(DType::Int8, &[3]);
        let plan = Plan::canonical(&[&c.layout.clone(), &a.layout.clone(), &b.layout.clone()]);
        let (oa, ob) = (a.op(), b.op());
        binary(BinaryOp::Add, &plan, &c.op(), &oa, &ob, MathMode::Standard).unwrap();
        assert_eq!(c.values(), ints(&[-56, 5, -5]));
        let r = binary(BinaryOp::Divide, &plan, &c.op(), &oa, &ob, MathMode::Standard).unwrap();
        assert_eq!(r.div_by_zero, 1);
        assert_eq!(c.values(), ints(&[1, 0, -3]));
        let e = binary(BinaryOp::Divide, &plan, &c.op(), &oa, &ob, MathMode::Error);
        assert_eq!(e, Err(KernelError::IntegerDivisionByZero { count: 1 }));
    }

    #[test]
    fn float_min_propagates_nan() {
        let mut a = Buf::from(DType::Double, &[2], &floats(&[f64::NAN, 1.0]));
        let mut b = Buf::from(DType::Double, &[2], &floats(&[0.0, 2.0]));
        let mut c = Buf::new(DType::Double, &[2]);
        let plan = Plan::canonical(&[&c.layout.clone(), &a.layout.clone(), &b.layout.clone()]);
        binary(BinaryOp::Minimum, &plan, &c.op(), &a.op(), &b.op(), MathMode::Standard).unwrap();
        let v = c.values();
        assert!(v[0].as_f64().is_nan());
        assert_eq!(v[1], Scalar::Float(1.0));
    }

    #[test]
    fn square_root_modes() {
        let mut a = Buf::from(DType::Double, &[2], &floats(&[-1.0, 4.0]));
        let mut c = Buf::new(DType::Double, &[2]);
        let plan = Plan::canonical(&[&c.layout.clone(), &a.layout.clone()]);
        let oa = a.op();
        let r = unary(UnaryOp::SquareRoot, &plan, &c.op(), &oa, MathMode::Warning).unwrap();
        assert_eq!(r.issues, 1);
        assert!(c.values()[0].as_f64().is_nan());
        assert_eq!(c.values()[1], Scalar::Float(2.0));
        let before = c.raw.clone();
        let e = unary(UnaryOp::SquareRoot, &plan, &c.op(), &oa, MathMode::Error);
        assert_eq!(e, Err(KernelError::DomainViolation { op: "square_root", count: 1 }));
        assert_eq!(c.raw, before);
    }

    #[test]
    fn complex_absolute_is_real() {
        let mut a = Buf::from(DType::ComplexFloat, &[1], &[Scalar::Complex(3.0, 4.0)]);
        let mut c = Buf::new(DType::Float, &[1]);
        let plan = Plan::canonical(&[&c.layout.clone(), &a.layout.clone()]);
        unary(UnaryOp::Absolute, &plan, &c.op(), &a.op(), MathMode::Standard).unwrap();
        assert_eq!(c.values(), floats(&[5.0]));
    }

    #[test]
    fn convert_checks_before_writing() {
        let mut a = Buf::from(DType::Double, &[2], &floats(&[1.5, f64::NAN]));
        let mut c = Buf::from(DType::Int32, &[2], &ints(&[9, 9]));
        let plan = Plan::canonical(&[&c.layout.clone(), &a.layout.clone()]);
        let oa = a.op();
        assert!(convert_copy(&plan, &c.op(), &oa, MathMode::Warning).is_err());
        assert_eq!(c.values(), ints(&[9, 9]));
        let r = convert_copy(&plan, &c.op(), &oa, MathMode::Standard).unwrap();
        assert_eq!(r.issues, 1);
        assert_eq!(c.values(), ints(&[1, 0]));
    }

    #[test]
    fn exact_sum_matches_integer_oracle() {
        // values k * 2^-30 with mixed magnitudes sum exactly in i128
        let mut s = ExactSum::new();
        let mut exact: i128 = 0;
        let mut x: u64 = 0x9E37_79B9_7F4A_7C15;
        for i in 0..1000 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let k = (x >> 11) as i64 * if i % 2 == 0 { 1 } else { -1 };
            let k = if i % 7 == 0 { k << 8 } else { k >> 20 };
            exact += k as i128;
            s.add(k as f64 * libm::ldexp(1.0, -30));
        }
        assert_eq!(s.value(), exact as f64 * libm::ldexp(1.0, -30));
        let mut t = ExactSum::new();
        for v in [1e100, 1.0, -1e100] {
            t.add(v);
        }
        assert_eq!(t.value(), 1.0);
    }

    #[test]
    fn column_sums_and_norm() {
        let vals: Vec<Scalar> = (0..25).map(|i| Scalar::Float(i as f64)).collect();
        let mut a = Buf::from(DType::Double, &[5, 5], &vals);
        let mut c = Buf::new(DType::Double, &[5]);
        let (al, cl) = (a.layout.clone(), c.layout.clone());
        reduce(ReduceOp::Sum, &al, &[true, false], &cl, &a.op(), &c.op()).unwrap();
        assert_eq!(c.values(), floats(&[10.0, 35.0, 60.0, 85.0, 110.0]));

        let mut v = Buf::from(DType::Int32, &[2], &ints(&[3, -4]));
        let mut n = Buf::new(DType::Double, &[]);
        let (vl, nl) = (v.layout.clone(), n.layout.clone());
        for (p, want) in [(2.0, 5.0), (1.0, 7.0), (f64::INFINITY, 4.0)] {
            reduce(ReduceOp::Norm(p), &vl, &[true], &nl, &v.op(), &n.op()).unwrap();
            assert_eq!(n.values(), floats(&[want]));
        }
        let mut s = Buf::new(DType::Int64, &[]);
        let sl = s.layout.clone();
        reduce(ReduceOp::Sum, &vl, &[true], &sl, &v.op(), &s.op()).unwrap();
        assert_eq!(s.values(), ints(&[-1]));
    }

    #[test]
    fn matmul_identity() {
        let vals: Vec<Scalar> = (0..6).map(|i| Scalar::Float(i as f64)).collect();
        let mut a = Buf::from(DType::Double, &[2, 3], &vals);
        let one = |i: usize, j: usize| Scalar::Float((i == j) as u8 as f64);
        let eye: Vec<Scalar> = (0..9).map(|k| one(k % 3, k / 3)).collect();
        let mut i3 = Buf::from(DType::Double, &[3, 3], &eye);
        let mut c = Buf::new(DType::Double, &[2, 3]);
        let (al, il, cl) = (a.layout.clone(), i3.layout.clone(), c.layout.clone());
        matmul(&cl, &al, &il, &c.op(), &a.op(), &i3.op()).unwrap();
        assert_eq!(c.values(), vals);
    }

    #[test]
    fn fill_and_arange() {
        let mut c = Buf::new(DType::Half, &[4]);
        let cl = c.layout.clone();
        arange(&cl, &c.op());
        assert_eq!(c.values(), floats(&[0.0, 1.0, 2.0, 3.0]));
        let plan = Plan::canonical(&[&cl]);
        fill(&plan, &c.op(), Scalar::Float(0.5), MathMode::Standard).unwrap();
        assert_eq!(c.values(), floats(&[0.5; 4]));
        assert!(fill(&plan, &c.op(), Scalar::Float(1e6), MathMode::Error).is_err());
    }
}
