//! Device types, device instances and streams.
//!
//! Two device types exist: `cpu`, which runs every operation synchronously
//! on the calling thread, and `emu`, a host-memory device with an arena
//! budget and one worker thread per stream.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, OnceLock, Weak};
use std::thread;

use crate::error::{Error, Result};
use crate::storage::Storage;

#[derive(Debug, PartialEq, Eq)]
pub struct DeviceType {
    pub name: &'static str,
    /// Whether kernels accept operands in non-native byte order.
    pub supports_byteswapped: bool,
    pub async_capable: bool,
}

pub static CPU: DeviceType = DeviceType { name: "cpu", supports_byteswapped: true, async_capable: false };
pub static EMU: DeviceType = DeviceType { name: "emu", supports_byteswapped: false, async_capable: true };

pub const DEFAULT_EMULATED: usize = 2;
pub const DEFAULT_ARENA_BYTES: usize = 1 << 30;
const DEFAULT_BUFFER_COUNT: usize = 2;
const DEFAULT_BUFFER_BYTES: usize = 1 << 20;

pub(crate) struct DeviceInner {
    ty: &'static DeviceType,
    index: usize,
    name: String,
    properties: Mutex<BTreeMap<String, String>>,
    buffer_config: Mutex<(usize, usize)>,
    buffer_cache: Mutex<Vec<Storage>>,
    arena: Option<Mutex<Arena>>,
    allocations: AtomicU64,
    default_stream: OnceLock<Stream>,
}

struct Arena {
    capacity: usize,
    used: usize,
}

/// A device instance. Cloning is cheap; clones compare equal.
#[derive(Clone)]
pub struct Device(pub(crate) Arc<DeviceInner>);

impl Device {
    fn new(ty: &'static DeviceType, index: usize) -> Device {
        let name = if ty == &CPU { "cpu".to_string() } else { format!("{}{index}", ty.name) };
        let mut props = BTreeMap::new();
        let arena = if ty == &EMU {
            props.insert("processors".to_string(), "1".to_string());
            Some(Mutex::new(Arena { capacity: DEFAULT_ARENA_BYTES, used: 0 }))
        } else {
            let n = thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
            props.insert("processors".to_string(), n.to_string());
            None
        };
        Device(Arc::new(DeviceInner {
            ty,
            index,
            name,
            properties: Mutex::new(props),
            buffer_config: Mutex::new((DEFAULT_BUFFER_COUNT, DEFAULT_BUFFER_BYTES)),
            buffer_cache: Mutex::new(Vec::new()),
            arena,
            allocations: AtomicU64::new(0),
            default_stream: OnceLock::new(),
        }))
    }

    pub fn device_type(&self) -> &'static DeviceType {
        self.0.ty
    }

    pub fn index(&self) -> usize {
        self.0.index
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn is_cpu(&self) -> bool {
        self.0.ty == &CPU
    }

    /// Open property map plus live entries such as `free_memory`.
    pub fn properties(&self) -> BTreeMap<String, String> {
        let mut p = self.0.properties.lock().unwrap().clone();
        match &self.0.arena {
            Some(a) => {
                let a = a.lock().unwrap();
                p.insert("arena_bytes".to_string(), a.capacity.to_string());
                p.insert("free_memory".to_string(), (a.capacity - a.used.min(a.capacity)).to_string());
            }
            None => {
                p.insert("free_memory".to_string(), "unknown".to_string());
            }
        }
        p
    }

    pub fn set_property(&self, key: &str, value: &str) {
        self.0.properties.lock().unwrap().insert(key.to_string(), value.to_string());
    }

    /// Free arena bytes; `None` where the device does not track memory.
    pub fn free_memory(&self) -> Option<usize> {
        self.0.arena.as_ref().map(|a| {
            let a = a.lock().unwrap();
            a.capacity.saturating_sub(a.used)
        })
    }

    /// Resize the arena budget of an emulated device.
    pub fn set_arena_bytes(&self, capacity: usize) -> Result<()> {
        match &self.0.arena {
            Some(a) => {
                a.lock().unwrap().capacity = capacity;
                Ok(())
            }
            None => Err(Error::Unsupported(format!("{} has no arena", self.name()))),
        }
    }

    pub(crate) fn reserve(&self, nbytes: usize) -> Result<()> {
        self.0.allocations.fetch_add(1, Ordering::Relaxed);
        if let Some(a) = &self.0.arena {
            let mut a = a.lock().unwrap();
            let available = a.capacity.saturating_sub(a.used);
            if nbytes > available {
                return Err(Error::OutOfMemory { device: self.name().to_string(), requested: nbytes, available });
            }
            a.used += nbytes;
        }
        Ok(())
    }

    pub(crate) fn release(&self, nbytes: usize) {
        if let Some(a) = &self.0.arena {
            let mut a = a.lock().unwrap();
            a.used = a.used.saturating_sub(nbytes);
        }
    }

    /// Number of storage allocations made on this device so far.
    pub fn allocation_count(&self) -> u64 {
        self.0.allocations.load(Ordering::Relaxed)
    }

    pub fn set_buffer_config(&self, count: usize, max_bytes: usize) {
        *self.0.buffer_config.lock().unwrap() = (count, max_bytes);
        let mut cache = self.0.buffer_cache.lock().unwrap();
        cache.retain(|s| s.nbytes() <= max_bytes);
        cache.truncate(count);
    }

    pub fn buffer_config(&self) -> (usize, usize) {
        *self.0.buffer_config.lock().unwrap()
    }

    /// Storage for an intermediate of `nbytes`, reusing an idle cached
    /// buffer when the request fits the configured size.
    pub(crate) fn intermediate(&self, nbytes: usize) -> Result<Storage> {
        let (count, max_bytes) = self.buffer_config();
        if count == 0 || nbytes > max_bytes {
            return Storage::alloc(self, nbytes);
        }
        let mut cache = self.0.buffer_cache.lock().unwrap();
        if let Some(s) = cache.iter().find(|s| s.is_idle() && s.nbytes() >= nbytes) {
            return Ok(s.clone());
        }
        let s = Storage::alloc(self, max_bytes)?;
        if cache.len() < count {
            cache.push(s.clone());
        }
        Ok(s)
    }

    /// The stream new storages on this device attach to.
    pub fn default_stream(&self) -> Stream {
        self.0.default_stream.get_or_init(|| Stream::new(self)).clone()
    }

    pub fn create_stream(&self) -> Stream {
        Stream::new(self)
    }

    pub fn ptr_eq(&self, other: &Device) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl PartialEq for Device {
    fn eq(&self, other: &Device) -> bool {
        self.ptr_eq(other)
    }
}

impl Eq for Device {}

impl fmt::Debug for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

type Job = Box<dyn FnOnce() -> Result<()> + Send>;

#[derive(Default)]
struct QueueState {
    pending: usize,
    error: Option<Error>,
}

struct Worker {
    tx: Mutex<mpsc::Sender<Job>>,
    state: Arc<(Mutex<QueueState>, Condvar)>,
}

struct StreamInner {
    id: u64,
    device: Weak<DeviceInner>,
    device_name: String,
    worker: Option<Worker>,
}

/// FIFO execution context. On asynchronous devices jobs run on a worker
/// thread in submission order; elsewhere they run at submission.
#[derive(Clone)]
pub struct Stream(Arc<StreamInner>);

static NEXT_STREAM: AtomicU64 = AtomicU64::new(1);

impl Stream {
    fn new(device: &Device) -> Stream {
        let worker = device.device_type().async_capable.then(|| {
            let (tx, rx) = mpsc::channel::<Job>();
            let state: Arc<(Mutex<QueueState>, Condvar)> = Arc::default();
            let st = state.clone();
            thread::Builder::new()
                .name(format!("tidepool-{}", device.name()))
                .spawn(move || {
                    for job in rx {
                        let r = job();
                        let (m, cv) = &*st;
                        let mut q = m.lock().unwrap();
                        if let Err(e) = r {
                            q.error.get_or_insert(e);
                        }
                        q.pending -= 1;
                        if q.pending == 0 {
                            cv.notify_all();
                        }
                    }
                })
                .expect("spawn stream worker");
            Worker { tx: Mutex::new(tx), state }
        });
        Stream(Arc::new(StreamInner {
            id: NEXT_STREAM.fetch_add(1, Ordering::Relaxed),
            device: Arc::downgrade(&device.0),
            device_name: device.name().to_string(),
            worker,
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn device(&self) -> Option<Device> {
        self.0.device.upgrade().map(Device)
    }

    pub fn device_name(&self) -> &str {
        &self.0.device_name
    }

    pub fn is_async(&self) -> bool {
        self.0.worker.is_some()
    }

    /// Schedule `job`. Synchronous streams run it now and return its
    /// result; asynchronous streams report failures from `sync`.
    pub fn submit<F>(&self, job: F) -> Result<()>
    where
        F: FnOnce() -> Result<()> + Send + 'static,
    {
        match &self.0.worker {
            None => job(),
            Some(w) => {
                w.state.0.lock().unwrap().pending += 1;
                w.tx.lock().unwrap().send(Box::new(job)).expect("stream worker alive");
                Ok(())
            }
        }
    }

    /// Block until all submitted work has completed. Returns the first
    /// failure of any job since the previous sync.
    pub fn sync(&self) -> Result<()> {
        if let Some(w) = &self.0.worker {
            let (m, cv) = &*w.state;
            let mut q = m.lock().unwrap();
            while q.pending > 0 {
                q = cv.wait(q).unwrap();
            }
            if let Some(e) = q.error.take() {
                return Err(e);
            }
        }
        Ok(())
    }

    pub fn pending(&self) -> usize {
        self.0.worker.as_ref().map_or(0, |w| w.state.0.lock().unwrap().pending)
    }

    pub fn ptr_eq(&self, other: &Stream) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Stream({}#{})", self.0.device_name, self.0.id)
    }
}

/// An ordered set of devices: one cpu followed by the emulated devices.
pub struct DeviceRegistry {
    devices: Vec<Device>,
}

impl DeviceRegistry {
    pub fn new(emulated: usize) -> DeviceRegistry {
        let mut devices = vec![Device::new(&CPU, 0)];
        devices.extend((0..emulated).map(|i| Device::new(&EMU, i)));
        DeviceRegistry { devices }
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn cpu(&self) -> &Device {
        &self.devices[0]
    }

    pub fn get(&self, name: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.name() == name)
    }

    pub fn emulated_count(&self) -> usize {
        self.devices.len() - 1
    }
}

static REGISTRY: OnceLock<DeviceRegistry> = OnceLock::new();
static CONFIGURED: AtomicUsize = AtomicUsize::new(usize::MAX);

/// Set the number of emulated devices before the registry is first used.
pub fn configure(emulated: usize) -> Result<()> {
    CONFIGURED.store(emulated, Ordering::Relaxed);
    let r = registry();
    if r.emulated_count() != emulated {
        return Err(Error::InvalidArgument(format!(
            "devices already initialized with {} emulated devices",
            r.emulated_count()
        )));
    }
    Ok(())
}

fn configured_count() -> usize {
    match CONFIGURED.load(Ordering::Relaxed) {
        usize::MAX => std::env::var("TIDEPOOL_EMU_DEVICES")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_EMULATED),
        n => n,
    }
}

pub fn registry() -> &'static DeviceRegistry {
    REGISTRY.get_or_init(|| DeviceRegistry::new(configured_count()))
}

pub fn list_devices() -> Vec<Device> {
    registry().devices().to_vec()
}

pub fn cpu() -> Device {
    registry().cpu().clone()
}

pub fn emu(index: usize) -> Result<Device> {
    device(&format!("emu{index}"))
}

pub fn device(name: &str) -> Result<Device> {
    registry()
        .get(name)
        .cloned()
        .ok_or_else(|| Error::InvalidArgument(format!("no device named {name:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn registry_shapes() {
        let names = |n| {
            DeviceRegistry::new(n).devices().iter().map(|d| d.name().to_string()).collect::<Vec<_>>()
        };
        assert_eq!(names(2), ["cpu", "emu0", "emu1"]);
        assert_eq!(names(0), ["cpu"]);
        assert_eq!(names(4), ["cpu", "emu0", "emu1", "emu2", "emu3"]);
    }

    #[test]
    fn streams_are_distinct_and_ordered() {
        let r = DeviceRegistry::new(1);
        let emu = r.get("emu0").unwrap();
        let (a, b) = (emu.create_stream(), emu.create_stream());
        assert_ne!(a.id(), b.id());
        r.cpu().create_stream().sync().unwrap();

        let trace = Arc::new(Mutex::new(Vec::new()));
        for i in 0..50 {
            let t = trace.clone();
            a.submit(move || {
                if i % 7 == 0 {
                    thread::sleep(Duration::from_millis(1));
                }
                t.lock().unwrap().push(i);
                Ok(())
            })
            .unwrap();
        }
        a.sync().unwrap();
        assert_eq!(*trace.lock().unwrap(), (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn async_failures_surface_on_sync() {
        let r = DeviceRegistry::new(1);
        let s = r.get("emu0").unwrap().create_stream();
        s.submit(|| Err(Error::Injected("boom".into()))).unwrap();
        assert!(matches!(s.sync(), Err(Error::Injected(_))));
        s.sync().unwrap();
    }

    #[test]
    fn cpu_free_memory_is_unknown() {
        let r = DeviceRegistry::new(1);
        assert_eq!(r.cpu().properties()["free_memory"], "unknown");
        assert_eq!(r.get("emu0").unwrap().free_memory(), Some(DEFAULT_ARENA_BYTES));
    }
}
