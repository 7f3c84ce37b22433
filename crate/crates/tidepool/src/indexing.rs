//! Tensor indexing: basic indexes give views, advanced ones copy.

use tidepool_core::index::{BoundIndex, IndexExpr, IndexPlan};
use tidepool_core::layout::OverlapVerdict;
use tidepool_core::Layout;

use crate::error::Result;
use crate::exec;
use crate::ops::{self, Arg, IntoArg};
use crate::status::implicit_casting;
use crate::tensor::Tensor;
use crate::Error;

impl Tensor {
    /// `self[expr]`.
    pub fn index(&self, expr: &IndexExpr) -> Result<Tensor> {
        self.index_bound(&expr.bind_to_size(self.dims())?)
    }

    /// `self[index]` for an index already bound to this tensor's dims (and
    /// possibly strides).
    pub fn index_bound(&self, index: &BoundIndex) -> Result<Tensor> {
        match index.plan(self.layout())? {
            IndexPlan::View(layout) => Ok(self.with_layout(layout)),
            IndexPlan::Gather(plan) => {
                let out = Tensor::new(plan.dims(), self.dtype(), self.device())?;
                let out = if self.byteorder().is_native() {
                    out
                } else {
                    let mut o = out;
                    o.set_byteorder(self.byteorder())?;
                    o
                };
                exec::gather(plan, self, &out)?;
                Ok(out)
            }
        }
    }

    /// `self[expr] = value`, broadcasting `value`.
    pub fn assign(&self, expr: &IndexExpr, value: impl IntoArg) -> Result<()> {
        self.assign_bound(&expr.bind_to_size(self.dims())?, value)
    }

    pub fn assign_bound(&self, index: &BoundIndex, value: impl IntoArg) -> Result<()> {
        self.check_writable()?;
        let value = value.into_arg()?;
        match index.plan(self.layout())? {
            IndexPlan::View(layout) => {
                let view = self.with_layout(layout);
                match value {
                    Arg::Scalar(s) => ops::fill(&view, s),
                    Arg::Tensor(v) => ops::copy(&v, &view),
                }
            }
            IndexPlan::Gather(plan) => {
                let v = match value {
                    Arg::Scalar(s) => Tensor::from_values(&[s], &[], self.dtype(), self.device())?,
                    Arg::Tensor(v) => {
                        if !implicit_casting() && (v.dtype() != self.dtype() || v.device() != self.device()) {
                            return Err(if v.dtype() != self.dtype() {
                                Error::strict(v.dtype(), self.dtype())
                            } else {
                                Error::strict_device(v.device().name(), self.device().name())
                            });
                        }
                        v
                    }
                };
                let v = v.broadcast_to(plan.dims())?;
                // materialize in the destination's dtype, device and byte
                // order; this also removes any aliasing with `self`
                let needs_copy = v.dtype() != self.dtype()
                    || v.device() != self.device()
                    || v.byteorder() != self.byteorder()
                    || !matches!(self.overlap(&v), OverlapVerdict::Disjoint);
                let v = if needs_copy {
                    let mut c = Tensor::new(plan.dims(), self.dtype(), self.device())?;
                    if !self.byteorder().is_native() {
                        c.set_byteorder(self.byteorder())?;
                    }
                    ops::convert_into(&v, &c, tidepool_core::MathMode::Standard)?;
                    c
                } else {
                    v
                };
                exec::scatter(plan, self, &v)
            }
        }
    }

    /// Layout a basic index would produce, without touching data.
    pub fn index_layout(&self, expr: &IndexExpr) -> Result<Option<Layout>> {
        match expr.bind_to_size(self.dims())?.plan(self.layout())? {
            IndexPlan::View(l) => Ok(Some(l)),
            IndexPlan::Gather(_) => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices;
    use tidepool_core::index::{IndexArray, IndexAtom, Mask};
    use tidepool_core::DType;

    fn grid() -> Tensor {
        ops::arange(12, DType::Int32, &devices::cpu()).unwrap().reshape(&[3, 4]).unwrap()
    }

    fn expr(atoms: Vec<IndexAtom>) -> IndexExpr {
        IndexExpr::new(atoms).unwrap()
    }

    #[test]
    fn basic_is_view() {
        let g = grid();
        let col = g.index(&expr(vec![(..).into(), 2.into()])).unwrap();
        assert!(col.shares_storage(&g));
        assert_eq!(col.to_f64_vec().unwrap(), [6.0, 7.0, 8.0]);
        col.assign(&expr(vec![(..).into()]), 0).unwrap();
        assert_eq!(g.get(&[1, 2]).unwrap(), tidepool_core::Scalar::Int(0));
    }

    #[test]
    fn advanced_copies() {
        let g = grid();
        let rows = g.index(&expr(vec![IndexAtom::Array(IndexArray::one_d(vec![2, 0])), (..).into()])).unwrap();
        assert!(!rows.shares_storage(&g));
        assert_eq!(rows.dims(), &[2, 4]);
        assert_eq!(rows.get(&[0, 1]).unwrap(), tidepool_core::Scalar::Int(5));
        assert_eq!(rows.get(&[1, 1]).unwrap(), tidepool_core::Scalar::Int(3));
    }

    #[test]
    fn mask_assign() {
        let g = grid();
        let vals: Vec<bool> = (0..12).map(|i| i % 5 == 0).collect();
        let m = Mask::new(vec![3, 4], vals).unwrap();
        let e = expr(vec![IndexAtom::Mask(m)]);
        assert_eq!(g.index(&e).unwrap().to_f64_vec().unwrap(), [0.0, 5.0, 10.0]);
        g.assign(&e, -1).unwrap();
        assert_eq!(g.to_f64_vec().unwrap().iter().filter(|&&v| v == -1.0).count(), 3);
    }
}
