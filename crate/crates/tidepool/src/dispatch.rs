//! Module registry and per-device-type function tables.
//!
//! Every kernel an operation runs is looked up here by (module, device
//! type, op name), so entries can be replaced or wrapped at run time.

use std::any::Any;
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock, RwLock};

use tidepool_core::element::Operand;
use tidepool_core::index::GatherPlan;
use tidepool_core::kernels::{self, BinaryOp, Outcome, ReduceOp, UnaryOp};
use tidepool_core::plan::Plan;
use tidepool_core::{Layout, MathMode, Scalar};

use crate::devices::{Device, CPU, EMU};
use crate::error::{Error, Result};

pub const CORE: &str = "core";

/// Arguments of one kernel invocation.
pub enum KernelArgs<'a> {
    Binary { op: BinaryOp, plan: &'a Plan, out: Operand<'a>, a: Operand<'a>, b: Operand<'a>, mode: MathMode },
    Unary { op: UnaryOp, plan: &'a Plan, out: Operand<'a>, a: Operand<'a>, mode: MathMode },
    Convert { plan: &'a Plan, out: Operand<'a>, src: Operand<'a>, mode: MathMode },
    Fill { plan: &'a Plan, out: Operand<'a>, value: Scalar, mode: MathMode },
    Arange { layout: &'a Layout, out: Operand<'a> },
    Byteswap { plan: &'a Plan, out: Operand<'a> },
    Reduce {
        op: ReduceOp,
        input_layout: &'a Layout,
        axes: &'a [bool],
        out_layout: &'a Layout,
        input: Operand<'a>,
        out: Operand<'a>,
    },
    Matmul {
        out_layout: &'a Layout,
        a_layout: &'a Layout,
        b_layout: &'a Layout,
        out: Operand<'a>,
        a: Operand<'a>,
        b: Operand<'a>,
    },
    Gather { plan: &'a GatherPlan, src: Operand<'a>, dst_layout: &'a Layout, dst: Operand<'a> },
    Scatter { plan: &'a GatherPlan, dst: Operand<'a>, src_layout: &'a Layout, src: Operand<'a> },
}

impl KernelArgs<'_> {
    /// Table key of the kernel these arguments belong to.
    pub fn op_name(&self) -> &'static str {
        match self {
            KernelArgs::Binary { op, .. } => op.name(),
            KernelArgs::Unary { op, .. } => op.name(),
            KernelArgs::Convert { .. } => "convert",
            KernelArgs::Fill { .. } => "fill",
            KernelArgs::Arange { .. } => "arange",
            KernelArgs::Byteswap { .. } => "byteswap",
            KernelArgs::Reduce { op, .. } => op.name(),
            KernelArgs::Matmul { .. } => "matmul",
            KernelArgs::Gather { .. } => "gather",
            KernelArgs::Scatter { .. } => "scatter",
        }
    }
}

pub type Handle = Arc<dyn Fn(&KernelArgs<'_>) -> Result<Outcome> + Send + Sync>;

struct Entry {
    handle: RwLock<Handle>,
    calls: AtomicU64,
}

/// A set of op implementations for one (module, device type) pair.
#[derive(Default)]
pub struct FunctionTable {
    ops: BTreeMap<String, Handle>,
}

impl FunctionTable {
    pub fn new() -> FunctionTable {
        FunctionTable::default()
    }

    pub fn with(mut self, op: &str, handle: Handle) -> FunctionTable {
        self.ops.insert(op.to_string(), handle);
        self
    }

    pub fn insert(&mut self, op: &str, handle: Handle) {
        self.ops.insert(op.to_string(), handle);
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleDescriptor {
    pub name: String,
    pub dependencies: Vec<String>,
    pub load_sequence: usize,
}

type TableKey = (String, String);

#[derive(Default)]
struct Inner {
    modules: Vec<ModuleDescriptor>,
    next_sequence: usize,
    tables: HashMap<TableKey, HashMap<String, Arc<Entry>>>,
    contexts: HashMap<TableKey, Arc<dyn Any + Send + Sync>>,
}

/// A looked-up kernel. Calling it counts as one dispatch.
#[derive(Clone)]
pub struct Dispatch {
    entry: Arc<Entry>,
}

impl Dispatch {
    pub fn call(&self, args: &KernelArgs<'_>) -> Result<Outcome> {
        self.entry.calls.fetch_add(1, Ordering::Relaxed);
        let h = self.entry.handle.read().unwrap().clone();
        h(args)
    }
}

/// Reinstates the handle that an override replaced.
pub struct Restore {
    entry: Arc<Entry>,
    original: Handle,
}

impl Restore {
    pub fn restore(self) {
        *self.entry.handle.write().unwrap() = self.original;
    }
}

/// Registry of module interfaces and their device implementations.
///
/// Registration, overriding and finalization must not race with running
/// operations; lookups may happen from any thread.
#[derive(Default)]
pub struct ModuleRegistry {
    inner: RwLock<Inner>,
}

impl ModuleRegistry {
    pub fn new() -> ModuleRegistry {
        ModuleRegistry::default()
    }

    /// A registry with the core module and its cpu and emu tables.
    pub fn with_core() -> ModuleRegistry {
        let r = ModuleRegistry::new();
        r.register_module(CORE, &[]).expect("fresh registry");
        r.register_device_impl(CORE, CPU.name, core_table()).expect("core registered");
        r.register_device_impl(CORE, EMU.name, core_table()).expect("core registered");
        r
    }

    pub fn register_module(&self, name: &str, dependencies: &[&str]) -> Result<()> {
        let mut g = self.inner.write().unwrap();
        if g.modules.iter().any(|m| m.name == name) {
            return Err(Error::Registration(format!("module {name} is already registered")));
        }
        if let Some(d) = dependencies.iter().find(|d| !g.modules.iter().any(|m| &m.name == *d)) {
            return Err(Error::Registration(format!("module {name} depends on unregistered module {d}")));
        }
        let load_sequence = g.next_sequence;
        g.next_sequence += 1;
        g.modules.push(ModuleDescriptor {
            name: name.to_string(),
            dependencies: dependencies.iter().map(|d| d.to_string()).collect(),
            load_sequence,
        });
        Ok(())
    }

    /// Attach (or extend) the implementation of `module` for a device type.
    pub fn register_device_impl(&self, module: &str, device_type: &str, table: FunctionTable) -> Result<()> {
        let mut g = self.inner.write().unwrap();
        if !g.modules.iter().any(|m| m.name == module) {
            return Err(Error::Registration(format!(
                "implementation for {device_type} registered before module {module}"
            )));
        }
        let ops = g.tables.entry((module.to_string(), device_type.to_string())).or_default();
        for (name, handle) in table.ops {
            ops.insert(name, Arc::new(Entry { handle: RwLock::new(handle), calls: AtomicU64::new(0) }));
        }
        Ok(())
    }

    fn entry(&self, module: &str, device_type: &str, op: &str) -> Result<Arc<Entry>> {
        let g = self.inner.read().unwrap();
        let ops = g.tables.get(&(module.to_string(), device_type.to_string())).ok_or_else(|| {
            Error::ImplNotLoaded { module: module.to_string(), device_type: device_type.to_string() }
        })?;
        ops.get(op).cloned().ok_or_else(|| Error::OpNotProvided {
            module: module.to_string(),
            device_type: device_type.to_string(),
            op: op.to_string(),
        })
    }

    pub fn lookup(&self, module: &str, device_type: &str, op: &str) -> Result<Dispatch> {
        Ok(Dispatch { entry: self.entry(module, device_type, op)? })
    }

    /// Replace an op by `wrap(original)`.
    pub fn override_op<F>(&self, module: &str, device_type: &str, op: &str, wrap: F) -> Result<Restore>
    where
        F: FnOnce(Handle) -> Handle,
    {
        let entry = self.entry(module, device_type, op)?;
        let mut h = entry.handle.write().unwrap();
        let original = h.clone();
        *h = wrap(original.clone());
        drop(h);
        Ok(Restore { entry, original })
    }

    /// Number of dispatches of one entry so far.
    pub fn call_count(&self, module: &str, device_type: &str, op: &str) -> Result<u64> {
        Ok(self.entry(module, device_type, op)?.calls.load(Ordering::Relaxed))
    }

    /// Call counters of every op of (module, device type), sorted by name.
    pub fn call_counts(&self, module: &str, device_type: &str) -> Vec<(String, u64)> {
        let g = self.inner.read().unwrap();
        let mut v: Vec<(String, u64)> = g
            .tables
            .get(&(module.to_string(), device_type.to_string()))
            .map(|ops| ops.iter().map(|(k, e)| (k.clone(), e.calls.load(Ordering::Relaxed))).collect())
            .unwrap_or_default();
        v.sort();
        v
    }

    pub fn modules(&self) -> Vec<ModuleDescriptor> {
        self.inner.read().unwrap().modules.clone()
    }

    /// Device types with an implementation of `module`.
    pub fn device_types(&self, module: &str) -> Vec<String> {
        let g = self.inner.read().unwrap();
        let mut v: Vec<String> = g.tables.keys().filter(|(m, _)| m == module).map(|(_, d)| d.clone()).collect();
        v.sort();
        v
    }

    /// Per-(module, device instance) context, created on first use.
    pub fn context<T, F>(&self, module: &str, device: &Device, init: F) -> Arc<T>
    where
        T: Any + Send + Sync,
        F: FnOnce() -> T,
    {
        let key = (module.to_string(), device.name().to_string());
        let mut g = self.inner.write().unwrap();
        let slot = g.contexts.entry(key).or_insert_with(|| Arc::new(init()));
        slot.clone().downcast::<T>().expect("context type is fixed per module")
    }

    /// Unload one module. Fails while another loaded module depends on it.
    pub fn finalize(&self, name: &str) -> Result<()> {
        let mut g = self.inner.write().unwrap();
        if let Some(m) = g.modules.iter().find(|m| m.dependencies.iter().any(|d| d == name)) {
            return Err(Error::Registration(format!("module {} still depends on {name}", m.name)));
        }
        let before = g.modules.len();
        g.modules.retain(|m| m.name != name);
        if g.modules.len() == before {
            return Err(Error::Registration(format!("module {name} is not loaded")));
        }
        g.tables.retain(|(m, _), _| m != name);
        g.contexts.retain(|(m, _), _| m != name);
        Ok(())
    }

    /// Unload everything, dependents first. Returns the order used.
    pub fn finalize_all(&self) -> Vec<String> {
        let mut order: Vec<ModuleDescriptor> = self.modules();
        order.sort_by_key(|m| std::cmp::Reverse(m.load_sequence));
        let names: Vec<String> = order.into_iter().map(|m| m.name).collect();
        for n in &names {
            self.finalize(n).expect("reverse load order respects dependencies");
        }
        names
    }
}

fn handle<F>(f: F) -> Handle
where
    F: Fn(&KernelArgs<'_>) -> Result<Outcome> + Send + Sync + 'static,
{
    Arc::new(f)
}

fn mismatch(expected: &str, args: &KernelArgs<'_>) -> Error {
    Error::InvalidArgument(format!("{expected} kernel called with {} arguments", args.op_name()))
}

/// Table of the portable kernels, keyed by op name.
pub fn core_table() -> FunctionTable {
    let mut t = FunctionTable::new();
    for op in BinaryOp::ALL {
        t.insert(
            op.name(),
            handle(move |args| match args {
                KernelArgs::Binary { op, plan, out, a, b, mode } => Ok(kernels::binary(*op, plan, out, a, b, *mode)?),
                other => Err(mismatch(op.name(), other)),
            }),
        );
    }
    for op in UnaryOp::ALL {
        t.insert(
            op.name(),
            handle(move |args| match args {
                KernelArgs::Unary { op, plan, out, a, mode } => Ok(kernels::unary(*op, plan, out, a, *mode)?),
                other => Err(mismatch(op.name(), other)),
            }),
        );
    }
    let reduce = handle(|args| match args {
        KernelArgs::Reduce { op, input_layout, axes, out_layout, input, out } => {
            Ok(kernels::reduce(*op, input_layout, axes, out_layout, input, out)?)
        }
        other => Err(mismatch("reduce", other)),
    });
    for name in ["sum", "product", "reduce_minimum", "reduce_maximum", "any", "all", "norm"] {
        t.insert(name, reduce.clone());
    }
    t.insert(
        "convert",
        handle(|args| match args {
            KernelArgs::Convert { plan, out, src, mode } => Ok(kernels::convert_copy(plan, out, src, *mode)?),
            other => Err(mismatch("convert", other)),
        }),
    );
    t.insert(
        "fill",
        handle(|args| match args {
            KernelArgs::Fill { plan, out, value, mode } => Ok(kernels::fill(plan, out, *value, *mode)?),
            other => Err(mismatch("fill", other)),
        }),
    );
    t.insert(
        "arange",
        handle(|args| match args {
            KernelArgs::Arange { layout, out } => {
                kernels::arange(layout, out);
                Ok(Outcome::default())
            }
            other => Err(mismatch("arange", other)),
        }),
    );
    t.insert(
        "byteswap",
        handle(|args| match args {
            KernelArgs::Byteswap { plan, out } => {
                kernels::byteswap(plan, out);
                Ok(Outcome::default())
            }
            other => Err(mismatch("byteswap", other)),
        }),
    );
    t.insert(
        "matmul",
        handle(|args| match args {
            KernelArgs::Matmul { out_layout, a_layout, b_layout, out, a, b } => {
                Ok(kernels::matmul(out_layout, a_layout, b_layout, out, a, b)?)
            }
            other => Err(mismatch("matmul", other)),
        }),
    );
    t.insert(
        "gather",
        handle(|args| match args {
            KernelArgs::Gather { plan, src, dst_layout, dst } => {
                kernels::gather(plan, src, dst_layout, dst);
                Ok(Outcome::default())
            }
            other => Err(mismatch("gather", other)),
        }),
    );
    t.insert(
        "scatter",
        handle(|args| match args {
            KernelArgs::Scatter { plan, dst, src_layout, src } => {
                kernels::scatter(plan, dst, src_layout, src);
                Ok(Outcome::default())
            }
            other => Err(mismatch("scatter", other)),
        }),
    );
    t
}

static GLOBAL: OnceLock<ModuleRegistry> = OnceLock::new();

/// The registry every tensor operation dispatches through.
pub fn global() -> &'static ModuleRegistry {
    GLOBAL.get_or_init(ModuleRegistry::with_core)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorCode;

    #[test]
    fn lookup_errors_are_distinct() {
        let r = ModuleRegistry::new();
        r.register_module(CORE, &[]).unwrap();
        r.register_device_impl(CORE, "cpu", core_table()).unwrap();
        assert!(r.lookup(CORE, "cpu", "add").is_ok());
        let a = r.lookup(CORE, "emu", "add").err().unwrap();
        let b = r.lookup(CORE, "cpu", "nonexistent").err().unwrap();
        assert_eq!(a.code(), ErrorCode::ImplNotLoaded);
        assert_eq!(b.code(), ErrorCode::OpNotProvided);
    }

    #[test]
    fn registration_rules() {
        let r = ModuleRegistry::new();
        assert!(r.register_device_impl("la", "cpu", FunctionTable::new()).is_err());
        assert!(r.register_module("la", &["core"]).is_err());
        r.register_module("core", &[]).unwrap();
        r.register_module("la", &["core"]).unwrap();
        assert!(r.register_module("la", &[]).is_err());
        assert!(r.finalize("core").is_err());
        assert_eq!(r.finalize_all(), ["la", "core"]);
        assert!(r.modules().is_empty());
    }

    #[test]
    fn override_and_restore() {
        let r = ModuleRegistry::with_core();
        let seen = Arc::new(AtomicU64::new(0));
        let s = seen.clone();
        let token = r
            .override_op(CORE, "cpu", "fill", move |orig| {
                Arc::new(move |args: &KernelArgs<'_>| {
                    s.fetch_add(1, Ordering::Relaxed);
                    orig(args)
                })
            })
            .unwrap();
        let mut raw = [0u8; 8];
        let cells = std::cell::Cell::from_mut(&mut raw[..]).as_slice_of_cells();
        let l = Layout::contiguous(&[2], 4).unwrap();
        let plan = Plan::canonical(&[&l]);
        let out = Operand::native(cells, tidepool_core::DType::Int32);
        let args = KernelArgs::Fill { plan: &plan, out, value: Scalar::Int(7), mode: MathMode::Standard };
        let d = r.lookup(CORE, "cpu", "fill").unwrap();
        d.call(&args).unwrap();
        d.call(&args).unwrap();
        assert_eq!(seen.load(Ordering::Relaxed), 2);
        assert_eq!(r.call_count(CORE, "cpu", "fill").unwrap(), 2);
        token.restore();
        d.call(&args).unwrap();
        assert_eq!(seen.load(Ordering::Relaxed), 2);
        assert_eq!(raw[..], [7i32.to_ne_bytes(), 7i32.to_ne_bytes()].concat()[..]);
    }
}
