//! Contiguous device memory.

use std::cell::Cell;
use std::fmt;
use std::ptr::NonNull;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use tidepool_core::element::Operand;
use tidepool_core::{ByteOrder, DType};

use crate::devices::{Device, Stream};
use crate::error::{Error, Result};

struct RawBuf {
    ptr: NonNull<u8>,
    len: usize,
    owned: bool,
}

// SAFETY: the buffer is plain bytes; access is serialized through the
// owning stream as documented on `Storage`.
unsafe impl Send for RawBuf {}
unsafe impl Sync for RawBuf {}

impl Drop for RawBuf {
    fn drop(&mut self) {
        if self.owned && self.len > 0 {
            // SAFETY: allocated in `Storage::alloc` from a boxed slice of
            // exactly `len` bytes.
            unsafe {
                drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(self.ptr.as_ptr(), self.len)));
            }
        }
    }
}

struct StorageInner {
    id: u64,
    device: Device,
    stream: RwLock<Stream>,
    buf: RawBuf,
    dtype: RwLock<DType>,
    order: RwLock<ByteOrder>,
    readonly: AtomicBool,
}

impl Drop for StorageInner {
    fn drop(&mut self) {
        if self.buf.owned {
            self.device.release(self.buf.len);
        }
    }
}

/// A contiguous byte buffer on one device.
///
/// Mutation must be serialized through the storage's stream; concurrent
/// reads are fine.
#[derive(Clone)]
pub struct Storage(Arc<StorageInner>);

static NEXT_STORAGE: AtomicU64 = AtomicU64::new(1);

impl Storage {
    fn wrap(device: &Device, buf: RawBuf) -> Storage {
        Storage(Arc::new(StorageInner {
            id: NEXT_STORAGE.fetch_add(1, Ordering::Relaxed),
            device: device.clone(),
            stream: RwLock::new(device.default_stream()),
            buf,
            dtype: RwLock::new(DType::UInt8),
            order: RwLock::new(ByteOrder::NATIVE),
            readonly: AtomicBool::new(false),
        }))
    }

    /// Zero-initialized storage of `nbytes` on `device`.
    pub fn alloc(device: &Device, nbytes: usize) -> Result<Storage> {
        device.reserve(nbytes)?;
        let ptr = if nbytes == 0 {
            NonNull::dangling()
        } else {
            let b: Box<[u8]> = vec![0u8; nbytes].into_boxed_slice();
            NonNull::new(Box::into_raw(b) as *mut u8).expect("non-null allocation")
        };
        Ok(Storage::wrap(device, RawBuf { ptr, len: nbytes, owned: true }))
    }

    /// Wrap caller-owned host memory without copying.
    pub fn from_external(buffer: &'static mut [u8], device: &Device) -> Result<Storage> {
        // SAFETY: a 'static exclusive borrow outlives the storage.
        unsafe { Storage::from_raw_parts(buffer.as_mut_ptr(), buffer.len(), device) }
    }

    /// # Safety
    /// `ptr` must be valid for reads and writes of `len` bytes for as long
    /// as the returned storage or any tensor over it is alive.
    pub unsafe fn from_raw_parts(ptr: *mut u8, len: usize, device: &Device) -> Result<Storage> {
        if !device.is_cpu() {
            return Err(Error::Unsupported(format!("external buffers must live on cpu, not {device}")));
        }
        let ptr = if len == 0 { NonNull::dangling() } else { NonNull::new(ptr).expect("non-null buffer") };
        Ok(Storage::wrap(device, RawBuf { ptr, len, owned: false }))
    }

    pub fn device(&self) -> &Device {
        &self.0.device
    }

    pub fn stream(&self) -> Stream {
        self.0.stream.read().unwrap().clone()
    }

    /// Attach a different stream, after the current one drains.
    pub fn set_stream(&self, stream: Stream) -> Result<()> {
        if stream.device_name() != self.device().name() {
            return Err(Error::InvalidArgument(format!(
                "stream belongs to {}, storage to {}",
                stream.device_name(),
                self.device()
            )));
        }
        let mut cur = self.0.stream.write().unwrap();
        cur.sync()?;
        *cur = stream;
        Ok(())
    }

    pub fn nbytes(&self) -> usize {
        self.0.buf.len
    }

    pub fn dtype(&self) -> DType {
        *self.0.dtype.read().unwrap()
    }

    /// Change the display/default dtype. Bytes and existing views are not
    /// affected.
    pub fn set_dtype(&self, dtype: DType) {
        *self.0.dtype.write().unwrap() = dtype;
    }

    pub fn byteorder(&self) -> ByteOrder {
        *self.0.order.read().unwrap()
    }

    pub fn set_byteorder(&self, order: ByteOrder) {
        *self.0.order.write().unwrap() = order;
    }

    pub fn is_readonly(&self) -> bool {
        self.0.readonly.load(Ordering::Relaxed)
    }

    pub fn set_readonly(&self, readonly: bool) {
        self.0.readonly.store(readonly, Ordering::Relaxed);
    }

    pub fn is_owned(&self) -> bool {
        self.0.buf.owned
    }

    /// Number of live handles (storage clones and tensors) on this buffer.
    pub fn refcount(&self) -> usize {
        Arc::strong_count(&self.0)
    }

    pub(crate) fn is_idle(&self) -> bool {
        Arc::strong_count(&self.0) == 1
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn ptr_eq(&self, other: &Storage) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Shared-mutable view of the bytes for kernels.
    pub(crate) fn cells(&self) -> &[Cell<u8>] {
        // SAFETY: `Cell<u8>` has the layout of `u8`; the buffer is valid for
        // `len` bytes while `self` lives, and every writer goes through
        // `Cell`, so aliasing views never produce references to mutated
        // bytes.
        unsafe { std::slice::from_raw_parts(self.0.buf.ptr.as_ptr() as *const Cell<u8>, self.0.buf.len) }
    }

    pub(crate) fn operand(&self, dtype: DType, order: ByteOrder) -> Operand<'_> {
        Operand::new(self.cells(), dtype, order)
    }

    /// Copy of the bytes after pending work completes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.stream().sync()?;
        Ok(self.cells().iter().map(Cell::get).collect())
    }

    /// Overwrite bytes starting at `offset`.
    pub fn write_bytes(&self, offset: usize, bytes: &[u8]) -> Result<()> {
        if self.is_readonly() {
            return Err(Error::ReadOnly);
        }
        let end = offset.checked_add(bytes.len()).filter(|&e| e <= self.nbytes());
        let Some(end) = end else {
            return Err(Error::InvalidArgument(format!(
                "write of {} bytes at {offset} exceeds storage of {}",
                bytes.len(),
                self.nbytes()
            )));
        };
        self.stream().sync()?;
        for (c, b) in self.cells()[offset..end].iter().zip(bytes) {
            c.set(*b);
        }
        Ok(())
    }
}

impl fmt::Debug for Storage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Storage(#{}, {}, {} bytes)", self.id(), self.device(), self.nbytes())
    }
}

/// Elements in the storage's own dtype; trailing bytes that do not fill
/// an element are not shown.
impl fmt::Display for Storage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let _ = self.stream().sync();
        let d = self.dtype();
        let op = self.operand(d, self.byteorder());
        let n = self.nbytes() / d.size();
        write!(f, "(")?;
        for i in 0..n {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", op.load_scalar(i * d.size()))?;
        }
        write!(f, ")\n<storage.{} of size {} on {}>", d, n, self.device())
    }
}

impl Storage {
    /// Number of whole elements of the display dtype.
    pub fn display_len(&self) -> usize {
        self.nbytes() / self.dtype().size()
    }
}
