//! Tensor operations.
//!
//! Each operation validates its operands, resolves the result device (the
//! left-hand tensor's) and dtype (promotion), converts operands when
//! implicit casting allows, broadcasts, stages inputs that may alias the
//! destination, and dispatches the kernel on the destination's stream.

use num_complex::Complex;

use tidepool_core::kernels::{BinaryOp, KernelError, ReduceOp, UnaryOp};
use tidepool_core::layout::{broadcast_shapes, OverlapVerdict};
use tidepool_core::{promote, DType, Kind, Layout, MathMode, Scalar};

use crate::devices::Device;
use crate::error::{Error, Result};
use crate::exec;
use crate::interop::Foreign;
use crate::status::implicit_casting;
use crate::tensor::{default_device, default_dtype, Tensor};

/// An operand: a tensor or a host scalar.
#[derive(Clone, Debug)]
pub enum Arg {
    Tensor(Tensor),
    Scalar(Scalar),
}

pub trait IntoArg {
    fn into_arg(self) -> Result<Arg>;
}

impl IntoArg for Arg {
    fn into_arg(self) -> Result<Arg> {
        Ok(self)
    }
}

impl IntoArg for Tensor {
    fn into_arg(self) -> Result<Arg> {
        Ok(Arg::Tensor(self))
    }
}

impl IntoArg for &Tensor {
    fn into_arg(self) -> Result<Arg> {
        Ok(Arg::Tensor(self.clone()))
    }
}

impl IntoArg for &Foreign {
    fn into_arg(self) -> Result<Arg> {
        Ok(Arg::Tensor(crate::interop::import(self)?))
    }
}

macro_rules! scalar_arg {
    ($($t:ty),*) => {$(
        impl IntoArg for $t {
            fn into_arg(self) -> Result<Arg> {
                Ok(Arg::Scalar(Scalar::from(self)))
            }
        }
    )*};
}

scalar_arg!(Scalar, bool, i8, i16, i32, i64, u8, u16, u32, u64, f32, f64, Complex<f64>);

fn kind_rank(k: Kind) -> u8 {
    match k {
        Kind::Bool => 0,
        Kind::Signed | Kind::Unsigned => 1,
        Kind::Float => 2,
        Kind::Complex => 3,
    }
}

/// Result device and dtype for a list of operands.
///
/// The device is that of the first tensor operand with at least one axis
/// (falling back to the first 0-dim tensor, then the default device). Host
/// scalars whose kind is no wider than the widest tensor kind adopt the
/// tensors' dtype instead of their own.
pub fn resolve(args: &[&Arg]) -> (Device, DType) {
    let tensors: Vec<&Tensor> = args
        .iter()
        .filter_map(|a| match a {
            Arg::Tensor(t) => Some(t),
            Arg::Scalar(_) => None,
        })
        .collect();
    let device = tensors
        .iter()
        .find(|t| !t.is_scalar())
        .or(tensors.first())
        .map(|t| t.device().clone())
        .unwrap_or_else(default_device);
    let tensor_dtype = tensors.iter().map(|t| t.dtype()).reduce(promote);
    let widest = tensors.iter().map(|t| kind_rank(t.dtype().kind())).max();
    let mut dtype = tensor_dtype;
    for a in args {
        if let Arg::Scalar(s) = a {
            if widest.is_some_and(|w| kind_rank(s.kind()) <= w) {
                continue;
            }
            let d = s.natural_dtype();
            dtype = Some(dtype.map_or(d, |t| promote(t, d)));
        }
    }
    (device, dtype.unwrap_or_else(default_dtype))
}

fn check_strict(t: &Tensor, dtype: DType, device: &Device) -> Result<()> {
    if implicit_casting() {
        return Ok(());
    }
    if t.dtype() != dtype {
        return Err(Error::strict(t.dtype(), dtype));
    }
    if t.device() != device {
        return Err(Error::strict_device(t.device().name(), device.name()));
    }
    Ok(())
}

fn needs_normalizing(t: &Tensor, device: &Device) -> bool {
    !t.byteorder().is_native() && !device.device_type().supports_byteswapped
}

/// Bring an operand to (device, dtype), converting when allowed.
fn materialize(arg: &Arg, device: &Device, dtype: DType) -> Result<Tensor> {
    match arg {
        Arg::Scalar(s) => Tensor::from_values(&[*s], &[], dtype, device),
        Arg::Tensor(t) => {
            if t.dtype() == dtype && t.device() == device && !needs_normalizing(t, device) {
                return Ok(t.clone());
            }
            check_strict(t, dtype, device)?;
            cast(t, Some(dtype), Some(device))
        }
    }
}

/// Copy `t` into an intermediate buffer on its device when it may alias
/// `dest`.
fn stage_if(t: Tensor, dest: &Tensor, exact_ok: bool) -> Result<Tensor> {
    match dest.overlap(&t) {
        OverlapVerdict::Disjoint => Ok(t),
        OverlapVerdict::ExactOverlap if exact_ok => Ok(t),
        _ => stage(&t),
    }
}

fn stage(t: &Tensor) -> Result<Tensor> {
    let nbytes = t.numel() * t.dtype().size();
    let storage = t.device().intermediate(nbytes)?;
    let buf = Tensor::from_storage(&storage, 0, t.dims(), None, Some(t.dtype()))?;
    exec::convert(&buf, t, MathMode::Standard)?;
    Ok(buf)
}

/// Target to compute into: `dest` itself when it already has the result
/// dtype and device, otherwise a fresh tensor that is copied into `dest`
/// afterwards.
fn target(dest: Option<&Tensor>, dims: &[usize], dtype: DType, device: &Device) -> Result<(Tensor, bool)> {
    match dest {
        Some(d) => {
            if d.dims() != dims {
                return Err(Error::ShapeMismatch(d.dims().to_vec(), dims.to_vec()));
            }
            d.check_writable()?;
            if d.dtype() == dtype && d.device() == device {
                Ok((d.clone(), false))
            } else {
                if !implicit_casting() {
                    check_strict(d, dtype, device).map_err(|_| {
                        if d.dtype() != dtype {
                            Error::strict(dtype, d.dtype())
                        } else {
                            Error::strict_device(device.name(), d.device().name())
                        }
                    })?;
                }
                Ok((Tensor::new(dims, dtype, device)?, true))
            }
        }
        None => Ok((Tensor::new(dims, dtype, device)?, false)),
    }
}

fn finish(result: Tensor, dest: Option<&Tensor>, write_back: bool) -> Result<Tensor> {
    match dest {
        Some(d) if write_back => {
            convert_into(&result, d, MathMode::Standard)?;
            Ok(d.clone())
        }
        Some(d) => Ok(d.clone()),
        None => Ok(result),
    }
}

fn unsupported(op: &'static str, dtype: DType) -> Error {
    Error::Kernel(KernelError::UnsupportedDType { op, dtype })
}

/// Elementwise binary operation with broadcasting.
pub fn binary(op: BinaryOp, a: impl IntoArg, b: impl IntoArg, dest: Option<&Tensor>, mode: MathMode) -> Result<Tensor> {
    let (a, b) = (a.into_arg()?, b.into_arg()?);
    let (device, dtype) = resolve(&[&a, &b]);
    if !op.supports(dtype) {
        return Err(unsupported(op.name(), dtype));
    }
    let ta = materialize(&a, &device, dtype)?;
    let tb = materialize(&b, &device, dtype)?;
    let dims = broadcast_shapes(ta.dims(), tb.dims())?;
    let (out, write_back) = target(dest, &dims, dtype, &device)?;
    let ta = stage_if(ta.broadcast_to(&dims)?, &out, true)?;
    let tb = stage_if(tb.broadcast_to(&dims)?, &out, true)?;
    exec::binary(op, &out, &ta, &tb, mode)?;
    finish(out, dest, write_back)
}

pub fn add(a: impl IntoArg, b: impl IntoArg) -> Result<Tensor> {
    binary(BinaryOp::Add, a, b, None, MathMode::Standard)
}

pub fn subtract(a: impl IntoArg, b: impl IntoArg) -> Result<Tensor> {
    binary(BinaryOp::Subtract, a, b, None, MathMode::Standard)
}

pub fn multiply(a: impl IntoArg, b: impl IntoArg) -> Result<Tensor> {
    binary(BinaryOp::Multiply, a, b, None, MathMode::Standard)
}

pub fn divide(a: impl IntoArg, b: impl IntoArg) -> Result<Tensor> {
    binary(BinaryOp::Divide, a, b, None, MathMode::Standard)
}

pub fn minimum(a: impl IntoArg, b: impl IntoArg) -> Result<Tensor> {
    binary(BinaryOp::Minimum, a, b, None, MathMode::Standard)
}

pub fn maximum(a: impl IntoArg, b: impl IntoArg) -> Result<Tensor> {
    binary(BinaryOp::Maximum, a, b, None, MathMode::Standard)
}

/// `dest op= b`, keeping the dtype and device of `dest`.
pub fn binary_assign(op: BinaryOp, dest: &Tensor, b: impl IntoArg) -> Result<()> {
    binary(op, dest, b, Some(dest), MathMode::Standard).map(drop)
}

/// Dtype a unary op computes in for input dtype `d`.
fn unary_dtype(op: UnaryOp, d: DType) -> Result<DType> {
    if op.supports(d) {
        return Ok(d);
    }
    if op.is_float_function() && !d.is_float() {
        return Ok(promote(d, DType::Half));
    }
    Err(unsupported(op.name(), d))
}

/// Elementwise unary operation.
///
/// Real inputs outside the domain give NaN in standard mode, a warning in
/// warning mode, an error in error mode, and switch the computation to the
/// complex dtype in complex mode.
pub fn unary(op: UnaryOp, a: impl IntoArg, dest: Option<&Tensor>, mode: MathMode) -> Result<Tensor> {
    let a = a.into_arg()?;
    let (device, d) = resolve(&[&a]);
    let d = match &a {
        Arg::Tensor(t) => t.dtype(),
        Arg::Scalar(_) => d,
    };
    let mut dtype = unary_dtype(op, d)?;
    let mut ta = materialize(&a, &device, dtype)?;
    let mut kernel_mode = mode;
    if mode == MathMode::Complex {
        kernel_mode = MathMode::Standard;
        if dtype.kind() == Kind::Float && op.is_domain_sensitive() && domain_violations(op, &ta)? > 0 {
            dtype = dtype.complex_variant().unwrap_or(dtype);
            ta = materialize(&Arg::Tensor(ta), &device, dtype)?;
        }
    }
    let out_dtype = op.result_dtype(dtype);
    let (out, write_back) = target(dest, ta.dims(), out_dtype, &device)?;
    let ta = stage_if(ta, &out, out_dtype.size() == dtype.size())?;
    exec::unary(op, &out, &ta, kernel_mode)?;
    finish(out, dest, write_back)
}

fn domain_violations(op: UnaryOp, t: &Tensor) -> Result<u64> {
    t.sync()?;
    let plan = Tensor::plan(&[t]);
    Ok(tidepool_core::kernels::domain_violations(op, &plan, 0, &t.operand()))
}

macro_rules! unary_fns {
    ($($name:ident => $op:ident),*) => {$(
        pub fn $name(a: impl IntoArg) -> Result<Tensor> {
            unary(UnaryOp::$op, a, None, MathMode::Standard)
        }
    )*};
}

unary_fns!(
    negate => Negate, absolute => Absolute, square_root => SquareRoot, exponential => Exponential,
    logarithm => Logarithm, sine => Sine, cosine => Cosine, arcsine => Arcsine, arccosine => Arccosine,
    conjugate => Conjugate
);

/// Reduce over `axes` (all axes when `None`); reduced axes are removed.
pub fn reduce(op: ReduceOp, a: &Tensor, axes: Option<&[usize]>, dest: Option<&Tensor>) -> Result<Tensor> {
    let n = a.ndim();
    let mut mask = vec![axes.is_none(); n];
    for &ax in axes.unwrap_or(&[]) {
        if ax >= n || mask[ax] {
            return Err(Error::InvalidArgument(format!("invalid or repeated axis {ax} for {n}-d tensor")));
        }
        mask[ax] = true;
    }
    let device = a.device().clone();
    let mut input = a.clone();
    if !op.supports(a.dtype()) {
        match op {
            ReduceOp::Any | ReduceOp::All => input = materialize(&Arg::Tensor(a.clone()), &device, DType::Bool)?,
            _ => return Err(unsupported(op.name(), a.dtype())),
        }
    }
    if needs_normalizing(&input, &device) {
        input = cast(&input, None, None)?;
    }
    let out_dims: Vec<usize> = a.dims().iter().zip(&mask).filter(|(_, &r)| !r).map(|(&d, _)| d).collect();
    let out_dtype = op.result_dtype(input.dtype());
    let (out, write_back) = target(dest, &out_dims, out_dtype, &device)?;
    let input = stage_if(input, &out, false)?;
    exec::reduce(op, &out, &input, mask)?;
    finish(out, dest, write_back)
}

pub fn sum(a: &Tensor, axes: Option<&[usize]>) -> Result<Tensor> {
    reduce(ReduceOp::Sum, a, axes, None)
}

pub fn product(a: &Tensor, axes: Option<&[usize]>) -> Result<Tensor> {
    reduce(ReduceOp::Product, a, axes, None)
}

pub fn reduce_minimum(a: &Tensor, axes: Option<&[usize]>) -> Result<Tensor> {
    reduce(ReduceOp::Minimum, a, axes, None)
}

pub fn reduce_maximum(a: &Tensor, axes: Option<&[usize]>) -> Result<Tensor> {
    reduce(ReduceOp::Maximum, a, axes, None)
}

pub fn any(a: &Tensor, axes: Option<&[usize]>) -> Result<Tensor> {
    reduce(ReduceOp::Any, a, axes, None)
}

pub fn all(a: &Tensor, axes: Option<&[usize]>) -> Result<Tensor> {
    reduce(ReduceOp::All, a, axes, None)
}

pub fn norm(a: &Tensor, p: f64, axes: Option<&[usize]>) -> Result<Tensor> {
    reduce(ReduceOp::Norm(p), a, axes, None)
}

fn as_matrix(t: &Tensor) -> Result<Tensor> {
    match t.ndim() {
        1 => {
            let l = t.layout();
            Ok(t.with_layout(Layout { offset: l.offset, dims: vec![l.dims[0], 1], strides: vec![l.strides[0]; 2] }))
        }
        2 => Ok(t.clone()),
        n => Err(tidepool_core::LayoutError::NotMatrix(n).into()),
    }
}

/// Matrix product; vectors are treated as column vectors.
pub fn matmul(a: &Tensor, b: &Tensor, dest: Option<&Tensor>) -> Result<Tensor> {
    let (a, b) = (as_matrix(a)?, as_matrix(b)?);
    if a.dims()[1] != b.dims()[0] {
        return Err(Error::ShapeMismatch(a.dims().to_vec(), b.dims().to_vec()));
    }
    let (aa, ab) = (Arg::Tensor(a), Arg::Tensor(b));
    let (device, dtype) = resolve(&[&aa, &ab]);
    let ta = materialize(&aa, &device, dtype)?;
    let tb = materialize(&ab, &device, dtype)?;
    let dims = [ta.dims()[0], tb.dims()[1]];
    let (out, write_back) = target(dest, &dims, dtype, &device)?;
    let ta = stage_if(ta, &out, false)?;
    let tb = stage_if(tb, &out, false)?;
    exec::matmul(&out, &ta, &tb)?;
    finish(out, dest, write_back)
}

/// `u.T * v` as a scalar.
pub fn inner(u: &Tensor, v: &Tensor) -> Result<Scalar> {
    let r = matmul(&as_matrix(u)?.t(), v, None)?;
    r.item()
}

/// `u * v.T`.
pub fn outer(u: &Tensor, v: &Tensor) -> Result<Tensor> {
    matmul(u, &as_matrix(v)?.t(), None)
}

/// Elementwise conversion into `dst` without strict checks: broadcasts,
/// normalizes byte order for the destination device and stages aliasing
/// sources.
pub(crate) fn convert_into(src: &Tensor, dst: &Tensor, mode: MathMode) -> Result<()> {
    dst.check_writable()?;
    let mut s = src.broadcast_to(dst.dims())?;
    if needs_normalizing(&s, dst.device()) {
        s = stage(&s)?;
    }
    let s = stage_if(s, dst, dst.dtype() == src.dtype())?;
    exec::convert(dst, &s, mode)
}

/// Copy `src` into `dst`, broadcasting `src`. A dtype or device change is
/// an implicit cast.
pub fn copy(src: impl IntoArg, dst: &Tensor) -> Result<()> {
    match src.into_arg()? {
        Arg::Scalar(v) => fill(dst, v),
        Arg::Tensor(s) => {
            dst.check_writable()?;
            check_strict(&s, dst.dtype(), dst.device())?;
            convert_into(&s, dst, MathMode::Standard)
        }
    }
}

/// New contiguous native-order tensor with the requested dtype and device
/// (defaults: those of `t`). Always copies.
pub fn cast(t: &Tensor, dtype: Option<DType>, device: Option<&Device>) -> Result<Tensor> {
    cast_with_mode(t, dtype, device, MathMode::Standard)
}

pub fn cast_with_mode(t: &Tensor, dtype: Option<DType>, device: Option<&Device>, mode: MathMode) -> Result<Tensor> {
    let dtype = dtype.unwrap_or(t.dtype());
    let device = device.cloned().unwrap_or_else(|| t.device().clone());
    let out = Tensor::new(t.dims(), dtype, &device)?;
    convert_into(t, &out, mode)?;
    Ok(out)
}

/// `t` itself when dtype and device already match, else a cast copy.
pub fn ensure(t: &Tensor, dtype: Option<DType>, device: Option<&Device>) -> Result<Tensor> {
    let same_dtype = dtype.is_none_or(|d| d == t.dtype());
    let same_device = device.is_none_or(|d| d == t.device());
    if same_dtype && same_device {
        return Ok(t.clone());
    }
    cast(t, dtype, device)
}

/// Set every element of `t` to `value`.
pub fn fill(t: &Tensor, value: impl Into<Scalar>) -> Result<()> {
    t.check_writable()?;
    exec::fill(t, value.into(), MathMode::Standard)
}

pub fn full(dims: &[usize], value: impl Into<Scalar>, dtype: DType, device: &Device) -> Result<Tensor> {
    let t = Tensor::new(dims, dtype, device)?;
    fill(&t, value)?;
    Ok(t)
}

pub fn zeros(dims: &[usize], dtype: DType, device: &Device) -> Result<Tensor> {
    full(dims, 0i64, dtype, device)
}

pub fn ones(dims: &[usize], dtype: DType, device: &Device) -> Result<Tensor> {
    full(dims, 1i64, dtype, device)
}

/// 0, 1, ..., n-1.
pub fn arange(n: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let t = Tensor::new(&[n], dtype, device)?;
    exec::arange(&t)?;
    Ok(t)
}

pub fn identity(n: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let t = zeros(&[n, n], dtype, device)?;
    fill(&t.diag(0)?, 1i64)?;
    Ok(t)
}

/// Reverse bytes in place; see [`Tensor::byteswap`].
pub fn byteswap(t: &mut Tensor) -> Result<()> {
    t.byteswap()
}
