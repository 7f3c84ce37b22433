//! External tensor types and the OTP1 file format.
//!
//! A plug-in registers an import and an export function under a name.
//! Registered foreign values can then be passed wherever an operand is
//! expected and are imported on the fly.

use std::any::Any;
use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock, RwLock};

use tidepool_core::otp1::{self, Header};
use tidepool_core::plan::for_each_index;
use tidepool_core::{ByteOrder, DType, Layout};

use crate::devices::{self, Device};
use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

/// A value of a registered external type.
pub struct Foreign {
    type_name: String,
    value: Box<dyn Any + Send + Sync>,
}

impl Foreign {
    pub fn new(type_name: &str, value: impl Any + Send + Sync) -> Foreign {
        Foreign { type_name: type_name.to_string(), value: Box::new(value) }
    }

    pub fn type_name(&self) -> &str {
        &self.type_name
    }

    pub fn downcast_ref<T: Any>(&self) -> Option<&T> {
        self.value.downcast_ref()
    }
}

impl fmt::Debug for Foreign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Foreign({})", self.type_name)
    }
}

pub type ImportFn = Arc<dyn Fn(&Foreign) -> Result<Tensor> + Send + Sync>;
/// Export; the flag requests a deep copy.
pub type ExportFn = Arc<dyn Fn(&Tensor, bool) -> Result<Foreign> + Send + Sync>;

#[derive(Clone)]
pub struct ExternalTypeRegistration {
    pub name: String,
    pub import: ImportFn,
    pub export: ExportFn,
    /// Whether the export can share bytes with the tensor.
    pub shallow_capable: bool,
}

fn table() -> &'static RwLock<HashMap<String, ExternalTypeRegistration>> {
    static TABLE: OnceLock<RwLock<HashMap<String, ExternalTypeRegistration>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut m = HashMap::new();
        for r in [otp1_blob(), host_view()] {
            m.insert(r.name.clone(), r);
        }
        RwLock::new(m)
    })
}

pub fn register_external(reg: ExternalTypeRegistration) -> Result<()> {
    let mut t = table().write().unwrap();
    if t.contains_key(&reg.name) {
        return Err(Error::Registration(format!("external type {} is already registered", reg.name)));
    }
    t.insert(reg.name.clone(), reg);
    Ok(())
}

pub fn registered_types() -> Vec<String> {
    let mut v: Vec<String> = table().read().unwrap().keys().cloned().collect();
    v.sort();
    v
}

fn registration(name: &str) -> Result<ExternalTypeRegistration> {
    table().read().unwrap().get(name).cloned().ok_or_else(|| Error::UnknownExternalType(name.to_string()))
}

/// Export `t` as the external type `name`.
///
/// Without `deep`, types that can share bytes do so; this requires the
/// tensor to live in host memory. Types that cannot share always copy.
pub fn convert_to(t: &Tensor, name: &str, deep: bool) -> Result<Foreign> {
    let reg = registration(name)?;
    let shallow = !deep && reg.shallow_capable;
    if shallow && !t.device().is_cpu() {
        return Err(Error::ShallowUnsupported(format!("{name} cannot share memory of {}", t.device())));
    }
    (reg.export)(t, !shallow)
}

pub fn import(x: &Foreign) -> Result<Tensor> {
    (registration(x.type_name())?.import)(x)
}

/// Serialized OTP1 bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Otp1Blob(pub Vec<u8>);

fn otp1_blob() -> ExternalTypeRegistration {
    ExternalTypeRegistration {
        name: "otp1-blob".into(),
        import: Arc::new(|x| {
            let blob = x.downcast_ref::<Otp1Blob>().ok_or_else(|| bad_value("otp1-blob"))?;
            from_otp1_bytes(&blob.0)
        }),
        export: Arc::new(|t, _| Ok(Foreign::new("otp1-blob", Otp1Blob(to_otp1_bytes(t)?)))),
        shallow_capable: false,
    }
}

/// A host tensor handed out as-is; shallow exports share bytes.
#[derive(Debug, Clone)]
pub struct HostView(pub Tensor);

fn host_view() -> ExternalTypeRegistration {
    ExternalTypeRegistration {
        name: "host-view".into(),
        import: Arc::new(|x| {
            let v = x.downcast_ref::<HostView>().ok_or_else(|| bad_value("host-view"))?;
            Ok(v.0.clone())
        }),
        export: Arc::new(|t, deep| {
            let t = if deep { ops::cast(t, None, Some(&devices::cpu()))? } else { t.clone() };
            Ok(Foreign::new("host-view", HostView(t)))
        }),
        shallow_capable: true,
    }
}

fn bad_value(name: &str) -> Error {
    Error::InvalidArgument(format!("value does not hold a {name}"))
}

/// Elements of `t` in column-major order, in the tensor's byte order.
fn payload(t: &Tensor) -> Result<Vec<u8>> {
    let bytes = t.storage().to_bytes()?;
    let size = t.dtype().size();
    let mut out = Vec::with_capacity(t.numel() * size);
    for_each_index(t.layout(), |_, off| {
        let off = off as usize;
        out.extend_from_slice(&bytes[off..off + size]);
    });
    Ok(out)
}

pub fn to_otp1_bytes(t: &Tensor) -> Result<Vec<u8>> {
    let header = Header { dtype: t.dtype(), order: t.byteorder(), dims: t.dims().to_vec() };
    let mut out = header.encode();
    out.extend(payload(t)?);
    Ok(out)
}

pub fn from_otp1_bytes(bytes: &[u8]) -> Result<Tensor> {
    let (header, data) = otp1::split(bytes)?;
    tensor_from_parts(&header, data, &devices::cpu())
}

fn tensor_from_parts(header: &Header, data: &[u8], device: &Device) -> Result<Tensor> {
    let mut t = Tensor::new(&header.dims, header.dtype, device)?;
    t.storage().write_bytes(0, data)?;
    t.set_byteorder(header.order)?;
    Ok(t)
}

/// Write header and column-major payload. Strides are not preserved.
pub fn save_otp1(t: &Tensor, sink: &mut impl Write) -> Result<()> {
    sink.write_all(&to_otp1_bytes(t)?)?;
    Ok(())
}

/// Read one tensor; the result is a contiguous cpu tensor with the stored
/// dtype and byte order. Bytes after the payload are an error.
pub fn load_otp1(source: &mut impl Read) -> Result<Tensor> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    from_otp1_bytes(&bytes)
}

pub fn save_file(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save_otp1(t, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_file(path: impl AsRef<Path>) -> Result<Tensor> {
    load_otp1(&mut BufReader::new(File::open(path)?))
}

/// Layout of the payload a tensor with these dims is stored with.
pub fn payload_layout(dtype: DType, dims: &[usize]) -> Result<Layout> {
    Ok(Layout::contiguous(dims, dtype.size())?)
}

/// Re-type and re-order a tensor as the `convert` command does.
pub fn retype(t: &Tensor, dtype: Option<DType>, order: Option<ByteOrder>) -> Result<Tensor> {
    let order = order.unwrap_or(t.byteorder());
    let dtype = dtype.unwrap_or(t.dtype());
    let mut out = if dtype == t.dtype() && order == t.byteorder() {
        t.clone()
    } else {
        ops::cast(t, Some(dtype), None)?
    };
    if out.byteorder() != order {
        out.byteswap()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_round_trip() {
        let t = ops::arange(6, DType::Float, &devices::cpu()).unwrap().reshape(&[2, 3]).unwrap();
        let f = convert_to(&t, "otp1-blob", false).unwrap();
        let b = f.downcast_ref::<Otp1Blob>().unwrap();
        assert_eq!(&b.0[..8], &[0x4F, 0x54, 0x50, 0x01, 10, 0, 2, 0]);
        let back = import(&f).unwrap();
        assert_eq!(back.to_f64_vec().unwrap(), t.to_f64_vec().unwrap());
    }

    #[test]
    fn shallow_rules() {
        let t = ops::arange(3, DType::Double, &devices::cpu()).unwrap();
        let v = convert_to(&t, "host-view", false).unwrap();
        assert!(import(&v).unwrap().shares_storage(&t));
        let d = convert_to(&t, "host-view", true).unwrap();
        assert!(!import(&d).unwrap().shares_storage(&t));
        let e = ops::arange(3, DType::Double, &devices::emu(0).unwrap()).unwrap();
        assert!(matches!(convert_to(&e, "host-view", false), Err(Error::ShallowUnsupported(_))));
        assert!(convert_to(&e, "host-view", true).is_ok());
        assert!(matches!(convert_to(&t, "nope", false), Err(Error::UnknownExternalType(_))));
    }

    #[test]
    fn foreign_operand() {
        let t = ops::arange(3, DType::Int8, &devices::cpu()).unwrap();
        let f = convert_to(&ops::arange(3, DType::Float, &devices::cpu()).unwrap(), "otp1-blob", false).unwrap();
        let s = ops::add(&t, &f).unwrap();
        assert_eq!(s.dtype(), DType::Float);
        assert_eq!(s.to_f64_vec().unwrap(), [0.0, 2.0, 4.0]);
    }

    #[test]
    fn strided_save_normalizes() {
        let t = ops::arange(6, DType::Int16, &devices::cpu()).unwrap().reshape(&[2, 3]).unwrap().t();
        let back = from_otp1_bytes(&to_otp1_bytes(&t).unwrap()).unwrap();
        assert_eq!(back.dims(), &[3, 2]);
        assert!(back.is_contiguous());
        assert_eq!(back.to_f64_vec().unwrap(), t.to_f64_vec().unwrap());
    }
}
