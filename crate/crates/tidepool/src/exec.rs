//! Kernel launch: dispatch lookup, stream submission and status reporting.
//!
//! Callers pass operands that are already on one device, in the kernel's
//! dtype, with equal dims and no unresolved aliasing.

use tidepool_core::index::GatherPlan;
use tidepool_core::kernels::{BinaryOp, Outcome, ReduceOp, UnaryOp};
use tidepool_core::{MathMode, Scalar};

use crate::devices::Device;
use crate::dispatch::{self, Dispatch, KernelArgs, CORE};
use crate::error::Result;
use crate::status::{self, StatusFlags};
use crate::storage::Storage;
use crate::tensor::Tensor;

pub(crate) fn lookup(device: &Device, op: &str) -> Result<Dispatch> {
    dispatch::global().lookup(CORE, device.device_type().name, op)
}

/// Submit `job` on the stream of `out`. Streams of other storages the job
/// reads are drained first; with such cross-stream inputs, or when
/// `wait` is set, the call returns only after the job ran.
fn submit<F>(out: &Storage, inputs: &[&Storage], wait: bool, job: F) -> Result<()>
where
    F: FnOnce() -> Result<()> + Send + 'static,
{
    let stream = out.stream();
    let mut cross = false;
    for s in inputs {
        let st = s.stream();
        if !st.ptr_eq(&stream) {
            st.sync()?;
            cross = true;
        }
    }
    stream.submit(job)?;
    if wait || cross {
        stream.sync()?;
    }
    Ok(())
}

fn report(op: &str, o: Outcome, kind: StatusFlags, mode: MathMode) {
    if o.issues > 0 {
        status::raise(kind);
        if mode == MathMode::Warning {
            let what = if kind == StatusFlags::DOMAIN { "outside the function domain" } else { "changed by conversion" };
            status::warn(&format!("{op}: {} element(s) {what}", o.issues));
        }
    }
    if o.div_by_zero > 0 {
        status::raise(StatusFlags::DIVIDE_BY_ZERO);
        if mode == MathMode::Warning {
            status::warn(&format!("{op}: integer division by zero in {} element(s)", o.div_by_zero));
        }
    }
}

fn waits(mode: MathMode) -> bool {
    mode != MathMode::Standard
}

pub(crate) fn binary(op: BinaryOp, out: &Tensor, a: &Tensor, b: &Tensor, mode: MathMode) -> Result<()> {
    let d = lookup(out.device(), op.name())?;
    let (o, a, b) = (out.clone(), a.clone(), b.clone());
    let inputs = [a.storage().clone(), b.storage().clone()];
    submit(out.storage(), &[&inputs[0], &inputs[1]], waits(mode), move || {
        let plan = Tensor::plan(&[&o, &a, &b]);
        let args = KernelArgs::Binary { op, plan: &plan, out: o.operand(), a: a.operand(), b: b.operand(), mode };
        let r = d.call(&args)?;
        report(op.name(), r, StatusFlags::DOMAIN, mode);
        Ok(())
    })
}

pub(crate) fn unary(op: UnaryOp, out: &Tensor, a: &Tensor, mode: MathMode) -> Result<()> {
    let d = lookup(out.device(), op.name())?;
    let (o, a) = (out.clone(), a.clone());
    let input = a.storage().clone();
    submit(out.storage(), &[&input], waits(mode), move || {
        let plan = Tensor::plan(&[&o, &a]);
        let r = d.call(&KernelArgs::Unary { op, plan: &plan, out: o.operand(), a: a.operand(), mode })?;
        report(op.name(), r, StatusFlags::DOMAIN, mode);
        Ok(())
    })
}

/// Elementwise conversion of `src` into `out` (equal dims). Runs on the
/// device of `out`.
pub(crate) fn convert(out: &Tensor, src: &Tensor, mode: MathMode) -> Result<()> {
    let d = lookup(out.device(), "convert")?;
    let (o, s) = (out.clone(), src.clone());
    let input = s.storage().clone();
    submit(out.storage(), &[&input], waits(mode), move || {
        let plan = Tensor::plan(&[&o, &s]);
        let r = d.call(&KernelArgs::Convert { plan: &plan, out: o.operand(), src: s.operand(), mode })?;
        report("convert", r, StatusFlags::LOSSY_CAST, mode);
        Ok(())
    })
}

pub(crate) fn fill(out: &Tensor, value: Scalar, mode: MathMode) -> Result<()> {
    let d = lookup(out.device(), "fill")?;
    let o = out.clone();
    submit(out.storage(), &[], waits(mode), move || {
        let plan = Tensor::plan(&[&o]);
        let r = d.call(&KernelArgs::Fill { plan: &plan, out: o.operand(), value, mode })?;
        report("fill", r, StatusFlags::LOSSY_CAST, mode);
        Ok(())
    })
}

pub(crate) fn arange(out: &Tensor) -> Result<()> {
    let d = lookup(out.device(), "arange")?;
    let o = out.clone();
    submit(out.storage(), &[], false, move || {
        d.call(&KernelArgs::Arange { layout: o.layout(), out: o.operand() })?;
        Ok(())
    })
}

pub(crate) fn byteswap(t: &Tensor) -> Result<()> {
    let d = lookup(t.device(), "byteswap")?;
    let o = t.clone();
    submit(t.storage(), &[], false, move || {
        let plan = Tensor::plan(&[&o]);
        d.call(&KernelArgs::Byteswap { plan: &plan, out: o.operand() })?;
        Ok(())
    })
}

pub(crate) fn reduce(op: ReduceOp, out: &Tensor, input: &Tensor, axes: Vec<bool>) -> Result<()> {
    let d = lookup(out.device(), op.name())?;
    let (o, i) = (out.clone(), input.clone());
    let src = i.storage().clone();
    submit(out.storage(), &[&src], false, move || {
        d.call(&KernelArgs::Reduce {
            op,
            input_layout: i.layout(),
            axes: &axes,
            out_layout: o.layout(),
            input: i.operand(),
            out: o.operand(),
        })?;
        Ok(())
    })
}

pub(crate) fn matmul(out: &Tensor, a: &Tensor, b: &Tensor) -> Result<()> {
    let d = lookup(out.device(), "matmul")?;
    let (o, a, b) = (out.clone(), a.clone(), b.clone());
    let inputs = [a.storage().clone(), b.storage().clone()];
    submit(out.storage(), &[&inputs[0], &inputs[1]], false, move || {
        d.call(&KernelArgs::Matmul {
            out_layout: o.layout(),
            a_layout: a.layout(),
            b_layout: b.layout(),
            out: o.operand(),
            a: a.operand(),
            b: b.operand(),
        })?;
        Ok(())
    })
}

pub(crate) fn gather(plan: GatherPlan, src: &Tensor, dst: &Tensor) -> Result<()> {
    let d = lookup(dst.device(), "gather")?;
    let (s, o) = (src.clone(), dst.clone());
    let input = s.storage().clone();
    submit(dst.storage(), &[&input], false, move || {
        d.call(&KernelArgs::Gather { plan: &plan, src: s.operand(), dst_layout: o.layout(), dst: o.operand() })?;
        Ok(())
    })
}

pub(crate) fn scatter(plan: GatherPlan, dst: &Tensor, src: &Tensor) -> Result<()> {
    let d = lookup(dst.device(), "scatter")?;
    let (s, o) = (src.clone(), dst.clone());
    let input = s.storage().clone();
    submit(dst.storage(), &[&input], false, move || {
        d.call(&KernelArgs::Scatter { plan: &plan, dst: o.operand(), src_layout: s.layout(), src: s.operand() })?;
        Ok(())
    })
}
