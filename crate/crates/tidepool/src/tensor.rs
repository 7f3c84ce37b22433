//! Strided typed views on storage.

use std::fmt;
use std::sync::RwLock;

use tidepool_core::element::Operand;
use tidepool_core::layout::{column_major_strides, element_count, pair_overlap, OverlapVerdict};
use tidepool_core::plan::{for_each_index, Plan};
use tidepool_core::scalar::convert;
use tidepool_core::{promote, ByteOrder, DType, Layout, LayoutError, Scalar, MAX_DIMS};

use crate::devices::{self, Device};
use crate::error::{Error, Result};
use crate::exec;
use crate::storage::Storage;

static DEFAULT_DTYPE: RwLock<DType> = RwLock::new(DType::Float);
static DEFAULT_DEVICE: RwLock<Option<Device>> = RwLock::new(None);

pub fn default_dtype() -> DType {
    *DEFAULT_DTYPE.read().unwrap()
}

pub fn set_default_dtype(dtype: DType) {
    *DEFAULT_DTYPE.write().unwrap() = dtype;
}

pub fn default_device() -> Device {
    DEFAULT_DEVICE.read().unwrap().clone().unwrap_or_else(devices::cpu)
}

pub fn set_default_device(device: Option<Device>) {
    *DEFAULT_DEVICE.write().unwrap() = device;
}

/// A strided, typed view on a storage.
///
/// Handles are cheap to clone; clones view the same bytes.
#[derive(Clone)]
pub struct Tensor {
    storage: Storage,
    layout: Layout,
    dtype: DType,
    order: ByteOrder,
}

impl Tensor {
    /// Fresh column-major tensor. Contents are zero.
    pub fn new(dims: &[usize], dtype: DType, device: &Device) -> Result<Tensor> {
        let layout = Layout::contiguous(dims, dtype.size())?;
        let nbytes = layout.numel().checked_mul(dtype.size()).ok_or(LayoutError::SizeOverflow)?;
        let storage = Storage::alloc(device, nbytes)?;
        storage.set_dtype(dtype);
        Ok(Tensor { storage, layout, dtype, order: ByteOrder::NATIVE })
    }

    /// Fresh tensor with the default dtype and device.
    pub fn with_defaults(dims: &[usize]) -> Result<Tensor> {
        Tensor::new(dims, default_dtype(), &default_device())
    }

    /// View over existing storage. `dtype` defaults to the storage dtype.
    pub fn from_storage(
        storage: &Storage,
        offset: usize,
        dims: &[usize],
        strides: Option<&[isize]>,
        dtype: Option<DType>,
    ) -> Result<Tensor> {
        let dtype = dtype.unwrap_or_else(|| storage.dtype());
        let strides = match strides {
            Some(s) => s.to_vec(),
            None => column_major_strides(dims, dtype.size()),
        };
        let layout = Layout::new(offset, dims.to_vec(), strides)?;
        if !layout.fits(dtype.size(), storage.nbytes()) {
            return Err(Error::InvalidArgument(format!(
                "view {dims:?} at offset {offset} does not fit in {} bytes",
                storage.nbytes()
            )));
        }
        let order = storage.byteorder();
        if !order.is_native() && !storage.device().device_type().supports_byteswapped {
            return Err(Error::Unsupported(format!("{} does not support byte-swapped data", storage.device())));
        }
        Ok(Tensor { storage: storage.clone(), layout, dtype, order })
    }

    /// Tensor from column-major `values`.
    pub fn from_values<T: Into<Scalar> + Copy>(
        values: &[T],
        dims: &[usize],
        dtype: DType,
        device: &Device,
    ) -> Result<Tensor> {
        let n = element_count(dims).ok_or(LayoutError::SizeOverflow)?;
        if n != values.len() {
            return Err(Error::ShapeMismatch(vec![values.len()], dims.to_vec()));
        }
        let t = Tensor::new(dims, dtype, device)?;
        let op = t.operand();
        let size = dtype.size();
        for (i, v) in values.iter().enumerate() {
            op.store_scalar(i * size, convert((*v).into(), dtype).0);
        }
        Ok(t)
    }

    /// Tensor from nested rows. The outermost level indexes axis 0.
    pub fn from_nested(data: &Nested, dtype: Option<DType>, device: Option<&Device>) -> Result<Tensor> {
        let mut dims = Vec::new();
        data.shape(&mut dims, 0)?;
        if dims.len() > MAX_DIMS {
            return Err(LayoutError::TooManyDims(dims.len()).into());
        }
        let dtype = match dtype {
            Some(d) => d,
            None => data.fold_dtype().unwrap_or_else(default_dtype),
        };
        let device = device.cloned().unwrap_or_else(default_device);
        let t = Tensor::new(&dims, dtype, &device)?;
        let op = t.operand();
        let mut idx = vec![0usize; dims.len()];
        data.store(&op, &t.layout, &mut idx, 0, dtype);
        Ok(t)
    }

    /// 0-dim tensor holding `value` in its natural dtype.
    pub fn scalar(value: impl Into<Scalar>, device: &Device) -> Result<Tensor> {
        let v = value.into();
        Tensor::from_values(&[v], &[], v.natural_dtype(), device)
    }

    pub(crate) fn with_layout(&self, layout: Layout) -> Tensor {
        Tensor { layout, ..self.clone() }
    }

    pub(crate) fn retyped(&self, layout: Layout, dtype: DType) -> Tensor {
        Tensor { layout, dtype, ..self.clone() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.layout.dims
    }

    pub fn strides(&self) -> &[isize] {
        &self.layout.strides
    }

    pub fn offset(&self) -> usize {
        self.layout.offset
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn ndim(&self) -> usize {
        self.layout.ndim()
    }

    pub fn numel(&self) -> usize {
        self.layout.numel()
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn byteorder(&self) -> ByteOrder {
        self.order
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn device(&self) -> &Device {
        self.storage.device()
    }

    pub fn is_scalar(&self) -> bool {
        self.ndim() == 0
    }

    pub fn is_contiguous(&self) -> bool {
        self.layout.is_contiguous(self.dtype.size())
    }

    /// Whether two distinct indices may share bytes (conservative).
    pub fn self_overlap(&self) -> bool {
        self.layout.self_overlap(self.dtype.size())
    }

    /// Read-only through the storage flag or because of self-overlap.
    pub fn is_readonly(&self) -> bool {
        self.storage.is_readonly() || self.self_overlap()
    }

    pub(crate) fn check_writable(&self) -> Result<()> {
        if self.is_readonly() {
            return Err(Error::ReadOnly);
        }
        Ok(())
    }

    pub fn shares_storage(&self, other: &Tensor) -> bool {
        self.storage.ptr_eq(&other.storage)
    }

    pub(crate) fn operand(&self) -> Operand<'_> {
        self.storage.operand(self.dtype, self.order)
    }

    /// Wait for pending work on the storage stream.
    pub fn sync(&self) -> Result<()> {
        self.storage.stream().sync()
    }

    /// Element values in column-major index order.
    pub fn to_scalars(&self) -> Result<Vec<Scalar>> {
        self.sync()?;
        let op = self.operand();
        let mut out = Vec::with_capacity(self.numel());
        for_each_index(&self.layout, |_, off| out.push(op.load_scalar(off as usize)));
        Ok(out)
    }

    /// Elements as f64 (real part for complex values).
    pub fn to_f64_vec(&self) -> Result<Vec<f64>> {
        Ok(self.to_scalars()?.into_iter().map(Scalar::as_f64).collect())
    }

    pub fn get(&self, index: &[usize]) -> Result<Scalar> {
        self.check_index(index)?;
        self.sync()?;
        Ok(self.operand().load_scalar(self.layout.offset_of(index) as usize))
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> Result<Scalar> {
        if self.numel() != 1 {
            return Err(Error::ShapeMismatch(self.dims().to_vec(), vec![]));
        }
        Ok(self.to_scalars()?[0])
    }

    fn check_index(&self, index: &[usize]) -> Result<()> {
        if index.len() != self.ndim() || index.iter().zip(self.dims()).any(|(&i, &d)| i >= d) {
            return Err(Error::InvalidArgument(format!("index {index:?} out of range for {:?}", self.dims())));
        }
        Ok(())
    }

    /// Reshape as a view when the strides allow it, else as a copy.
    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        match self.reshape_view(dims)? {
            Some(v) => Ok(v),
            None => {
                let c = crate::ops::cast(self, Some(self.dtype), None)?;
                Ok(c.reshape_view(dims)?.expect("contiguous tensors reshape as views"))
            }
        }
    }

    /// Reshape without copying, `None` if the strides do not allow it.
    pub fn reshape_view(&self, dims: &[usize]) -> Result<Option<Tensor>> {
        Ok(self.layout.reshape_view(dims, self.dtype.size())?.map(|l| self.with_layout(l)))
    }

    pub fn permute(&self, order: &[usize]) -> Result<Tensor> {
        Ok(self.with_layout(self.layout.permute(order)?))
    }

    /// Transposed view; a vector of length n becomes a 1×n matrix.
    pub fn t(&self) -> Tensor {
        self.with_layout(self.layout.transpose())
    }

    /// Broadcast view. Expanded axes get stride 0, which makes the result
    /// read-only.
    pub fn broadcast_to(&self, dims: &[usize]) -> Result<Tensor> {
        Ok(self.with_layout(self.layout.broadcast_to(dims)?))
    }

    pub fn diag(&self, k: isize) -> Result<Tensor> {
        Ok(self.with_layout(self.layout.diagonal(k)?))
    }

    /// Real-part view; the identity on real tensors.
    pub fn real(&self) -> Tensor {
        if !self.dtype.is_complex() {
            return self.clone();
        }
        self.retyped(self.layout.clone(), self.dtype.real_part())
    }

    pub fn imag(&self) -> Result<Tensor> {
        if !self.dtype.is_complex() {
            return Err(Error::InvalidArgument(format!("imag of non-complex dtype {}", self.dtype)));
        }
        let half = self.dtype.component_size() as isize;
        Ok(self.retyped(self.layout.shifted(half), self.dtype.real_part()))
    }

    /// Reverse the bytes of every element and flip the byte-order flag;
    /// values are unchanged.
    pub fn byteswap(&mut self) -> Result<()> {
        self.check_writable()?;
        self.require_byteswap_support()?;
        exec::byteswap(self)?;
        self.order = self.order.flipped();
        Ok(())
    }

    /// Change only the byte-order flag; the bytes are reinterpreted.
    pub fn set_byteorder(&mut self, order: ByteOrder) -> Result<()> {
        if !order.is_native() {
            self.require_byteswap_support()?;
        }
        self.order = order;
        Ok(())
    }

    fn require_byteswap_support(&self) -> Result<()> {
        if !self.device().device_type().supports_byteswapped {
            return Err(Error::Unsupported(format!("{} does not support byte-swapped data", self.device())));
        }
        Ok(())
    }

    /// Release the storage reference and leave an empty cpu tensor.
    pub fn dealloc(&mut self) {
        let storage = Storage::alloc(&devices::cpu(), 0).expect("empty cpu storage");
        let layout = Layout::contiguous(&[0], self.dtype.size()).expect("empty layout");
        *self = Tensor { storage, layout, dtype: self.dtype, order: ByteOrder::NATIVE };
    }

    /// Overlap verdict of two views.
    pub fn overlap(&self, other: &Tensor) -> OverlapVerdict {
        if !self.shares_storage(other) {
            return OverlapVerdict::Disjoint;
        }
        pair_overlap(&self.layout, self.dtype.size(), &other.layout, other.dtype.size())
    }

    /// Canonical iteration plan over views of equal dims.
    pub fn plan(views: &[&Tensor]) -> Plan {
        let layouts: Vec<&Layout> = views.iter().map(|t| &t.layout).collect();
        Plan::canonical(&layouts)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("device", self.device())
            .field("dtype", &self.dtype)
            .field("order", &self.order)
            .field("offset", &self.layout.offset)
            .field("dims", &self.layout.dims)
            .field("strides", &self.layout.strides)
            .finish()
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let values = match self.to_scalars() {
            Ok(v) => v,
            Err(e) => return write!(f, "<unreadable tensor: {e}>"),
        };
        let cells: Vec<String> = values.iter().map(|v| format_scalar(*v)).collect();
        let width = cells.iter().map(String::len).max().unwrap_or(0);
        let dims = self.dims();
        match dims.len() {
            0 => writeln!(f, "{}", cells[0])?,
            1 => {
                let row: Vec<String> = cells.iter().map(|c| format!("{c:>width$}")).collect();
                writeln!(f, "({})", row.join(", "))?;
            }
            _ => {
                let (rows, cols) = (dims[0], dims[1]);
                let slice = rows * cols;
                let slices = cells.len().checked_div(slice).unwrap_or(0);
                for s in 0..slices {
                    if dims.len() > 2 {
                        let mut rest = Vec::new();
                        let mut k = s;
                        for &d in &dims[2..] {
                            rest.push((k % d).to_string());
                            k /= d;
                        }
                        writeln!(f, "(:,:,{})", rest.join(","))?;
                    }
                    for r in 0..rows {
                        let row: Vec<String> =
                            (0..cols).map(|c| format!("{:>width$}", cells[s * slice + c * rows + r])).collect();
                        writeln!(f, "   {}", row.join("  "))?;
                    }
                }
            }
        }
        let shape: Vec<String> = dims.iter().map(usize::to_string).collect();
        let order = if self.order.is_native() { String::new() } else { format!(", {}", self.order) };
        write!(f, "<tensor.{} of size {} on {}{order}>", self.dtype, shape.join("x"), self.device())
    }
}

fn format_scalar(v: Scalar) -> String {
    match v {
        Scalar::Float(x) => format_float(x),
        Scalar::Complex(re, im) => {
            let sign = if im.is_sign_negative() { '-' } else { '+' };
            format!("{}{sign}{}j", format_float(re), format_float(im.abs()))
        }
        other => other.to_string(),
    }
}

fn format_float(x: f64) -> String {
    if x.is_finite() && x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.0}")
    } else if x.is_finite() && (x.abs() >= 1e6 || x.abs() < 1e-4) {
        format!("{x:.6e}")
    } else {
        let s = format!("{x:.6}");
        if x.is_finite() {
            s.trim_end_matches('0').to_string()
        } else {
            s
        }
    }
}

/// Nested data for [`Tensor::from_nested`].
#[derive(Debug, Clone, PartialEq)]
pub enum Nested {
    Value(Scalar),
    List(Vec<Nested>),
}

impl Nested {
    fn shape(&self, dims: &mut Vec<usize>, _depth: usize) -> Result<()> {
        let mut cur = self;
        while let Nested::List(items) = cur {
            dims.push(items.len());
            match items.first() {
                Some(first) => cur = first,
                None => break,
            }
        }
        if !self.rectangular(dims, 0) {
            return Err(ragged());
        }
        Ok(())
    }

    fn rectangular(&self, dims: &[usize], depth: usize) -> bool {
        match self {
            Nested::Value(_) => depth == dims.len(),
            Nested::List(items) => {
                depth < dims.len()
                    && items.len() == dims[depth]
                    && items.iter().all(|it| it.rectangular(dims, depth + 1))
            }
        }
    }

    fn fold_dtype(&self) -> Option<DType> {
        match self {
            Nested::Value(v) => Some(v.natural_dtype()),
            Nested::List(items) => items.iter().filter_map(Nested::fold_dtype).reduce(promote),
        }
    }

    fn store(&self, op: &Operand<'_>, layout: &Layout, idx: &mut Vec<usize>, depth: usize, dtype: DType) {
        match self {
            Nested::Value(v) => op.store_scalar(layout.offset_of(idx) as usize, convert(*v, dtype).0),
            Nested::List(items) => {
                for (i, it) in items.iter().enumerate() {
                    idx[depth] = i;
                    it.store(op, layout, idx, depth + 1, dtype);
                }
            }
        }
    }
}

fn ragged() -> Error {
    Error::InvalidArgument("ragged nested data".to_string())
}

impl<T: Into<Scalar>> From<T> for Nested {
    fn from(v: T) -> Nested {
        Nested::Value(v.into())
    }
}

/// Build [`Nested`] data: `nested![[1, 2], [3, 4]]`.
#[macro_export]
macro_rules! nested {
    ([$($x:tt),* $(,)?]) => { $crate::tensor::Nested::List(vec![$($crate::nested!($x)),*]) };
    ($x:expr) => { $crate::tensor::Nested::from($x) };
}
