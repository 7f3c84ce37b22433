//! Index expressions and reusable index objects.
//!
//! An [`IndexExpr`] is a list of atoms. Binding it to a tensor size resolves
//! negative indices, clamps ranges, validates index arrays and turns masks
//! into explicit index tuples. Binding the result to strides additionally
//! converts every selected tuple into a relative byte offset.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::layout::Layout;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexError {
    MultipleEllipses,
    ZeroStep,
    MultipleAdvanced,
    EmptyMask,
    BadArrayShape,
    TooManyIndices { consumed: usize, ndim: usize },
    OutOfRange { axis: usize, index: i64, extent: usize },
    MaskShape { axis: usize, expected: Vec<usize>, got: Vec<usize> },
    DimsMismatch { bound: Vec<usize>, got: Vec<usize> },
    StridesMismatch { bound: Vec<isize>, got: Vec<isize> },
    NotSizeBound,
}

impl fmt::Display for IndexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexError::MultipleEllipses => f.write_str("an ellipsis may appear only once"),
            IndexError::ZeroStep => f.write_str("range step cannot be zero"),
            IndexError::MultipleAdvanced => {
                f.write_str("at most one index array or mask per expression")
            }
            IndexError::EmptyMask => f.write_str("mask must have at least one dimension"),
            IndexError::BadArrayShape => f.write_str("index array must be 1-D or 2-D"),
            IndexError::TooManyIndices { consumed, ndim } => {
                write!(f, "index consumes {consumed} dimensions but tensor has {ndim}")
            }
            IndexError::OutOfRange { axis, index, extent } => {
                write!(f, "index {index} out of range for axis {axis} with extent {extent}")
            }
            IndexError::MaskShape { axis, expected, got } => {
                write!(f, "mask of dims {got:?} does not match dims {expected:?} at axis {axis}")
            }
            IndexError::DimsMismatch { bound, got } => {
                write!(f, "index bound to dims {bound:?} applied to dims {got:?}")
            }
            IndexError::StridesMismatch { bound, got } => {
                write!(f, "index bound to strides {bound:?} applied to strides {got:?}")
            }
            IndexError::NotSizeBound => f.write_str("index must be bound to a size first"),
        }
    }
}

impl core::error::Error for IndexError {}

/// Integer index array. A 1-D array selects along one axis; a 2-D array of
/// shape n×w holds n index tuples (one per row) over w consecutive axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexArray {
    width: usize,
    two_d: bool,
    /// Row-major tuples: `values[i * width + j]` is coordinate j of tuple i.
    values: Vec<i64>,
}

impl IndexArray {
    pub fn one_d(values: Vec<i64>) -> IndexArray {
        IndexArray { width: 1, two_d: false, values }
    }

    /// Tuples given row by row.
    pub fn tuples(width: usize, values: Vec<i64>) -> Result<IndexArray, IndexError> {
        if width == 0 || !values.len().is_multiple_of(width) {
            return Err(IndexError::BadArrayShape);
        }
        Ok(IndexArray { width, two_d: true, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_two_d(&self) -> bool {
        self.two_d
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }
}

/// Boolean mask over `dims.len()` consecutive axes, values in column-major
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: Vec<usize>,
    values: Vec<bool>,
}

impl Mask {
    pub fn new(dims: Vec<usize>, values: Vec<bool>) -> Result<Mask, IndexError> {
        if dims.is_empty() {
            return Err(IndexError::EmptyMask);
        }
        if dims.iter().product::<usize>() != values.len() {
            return Err(IndexError::BadArrayShape);
        }
        Ok(Mask { dims, values })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }
}

/// Half-open range with optional bounds, clamped like host-language slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangeSpec {
    pub start: Option<i64>,
    pub stop: Option<i64>,
    pub step: i64,
}

impl RangeSpec {
    pub fn new(start: Option<i64>, stop: Option<i64>, step: i64) -> RangeSpec {
        RangeSpec { start, stop, step }
    }

    /// Resolve against an extent: (first index, element count).
    pub fn resolve(&self, extent: usize) -> (usize, usize) {
        let n = extent as i64;
        let step = self.step;
        let fix = |v: i64, lo: i64, hi: i64| {
            let v = if v < 0 { v + n } else { v };
            v.clamp(lo, hi)
        };
        let (start, stop) = if step > 0 {
            (self.start.map_or(0, |v| fix(v, 0, n)), self.stop.map_or(n, |v| fix(v, 0, n)))
        } else {
            (
                self.start.map_or(n - 1, |v| fix(v, -1, n - 1)),
                self.stop.map_or(-1, |v| fix(v, -1, n - 1)),
            )
        };
        let len = if step > 0 {
            if stop > start { (stop - start + step - 1) / step } else { 0 }
        } else if start > stop {
            (start - stop + (-step) - 1) / (-step)
        } else {
            0
        };
        if len == 0 {
            (0, 0)
        } else {
            (start as usize, len as usize)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexAtom {
    Scalar(i64),
    Range(RangeSpec),
    Colon,
    Ellipsis,
    Array(IndexArray),
    Mask(Mask),
}

impl IndexAtom {
    pub fn range(start: i64, stop: i64) -> IndexAtom {
        IndexAtom::Range(RangeSpec::new(Some(start), Some(stop), 1))
    }

    pub fn is_basic(&self) -> bool {
        !matches!(self, IndexAtom::Array(_) | IndexAtom::Mask(_))
    }

    /// Number of tensor dimensions this atom consumes.
    pub fn consumes(&self) -> usize {
        match self {
            IndexAtom::Ellipsis => 0,
            IndexAtom::Array(a) => a.width,
            IndexAtom::Mask(m) => m.dims.len(),
            _ => 1,
        }
    }
}

impl From<i64> for IndexAtom {
    fn from(v: i64) -> Self {
        IndexAtom::Scalar(v)
    }
}

impl From<core::ops::Range<i64>> for IndexAtom {
    fn from(r: core::ops::Range<i64>) -> Self {
        IndexAtom::Range(RangeSpec::new(Some(r.start), Some(r.end), 1))
    }
}

impl From<core::ops::RangeFrom<i64>> for IndexAtom {
    fn from(r: core::ops::RangeFrom<i64>) -> Self {
        IndexAtom::Range(RangeSpec::new(Some(r.start), None, 1))
    }
}

impl From<core::ops::RangeTo<i64>> for IndexAtom {
    fn from(r: core::ops::RangeTo<i64>) -> Self {
        IndexAtom::Range(RangeSpec::new(None, Some(r.end), 1))
    }
}

impl From<core::ops::RangeFull> for IndexAtom {
    fn from(_: core::ops::RangeFull) -> Self {
        IndexAtom::Colon
    }
}

impl From<Vec<i64>> for IndexAtom {
    fn from(v: Vec<i64>) -> Self {
        IndexAtom::Array(IndexArray::one_d(v))
    }
}

/// A validated sequence of index atoms.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexExpr {
    atoms: Vec<IndexAtom>,
}

impl IndexExpr {
    pub fn new(atoms: Vec<IndexAtom>) -> Result<IndexExpr, IndexError> {
        let mut ellipses = 0;
        let mut advanced = 0;
        for a in &atoms {
            match a {
                IndexAtom::Ellipsis => ellipses += 1,
                IndexAtom::Range(r) if r.step == 0 => return Err(IndexError::ZeroStep),
                IndexAtom::Array(_) | IndexAtom::Mask(_) => advanced += 1,
                _ => {}
            }
        }
        if ellipses > 1 {
            return Err(IndexError::MultipleEllipses);
        }
        if advanced > 1 {
            return Err(IndexError::MultipleAdvanced);
        }
        Ok(IndexExpr { atoms })
    }

    /// Expression formed by appending the atoms of `other`.
    pub fn concat(&self, other: &IndexExpr) -> Result<IndexExpr, IndexError> {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        IndexExpr::new(atoms)
    }

    pub fn atoms(&self) -> &[IndexAtom] {
        &self.atoms
    }

    /// Only scalars, ranges, colons and ellipses.
    pub fn is_basic(&self) -> bool {
        self.atoms.iter().all(IndexAtom::is_basic)
    }

    pub fn consumed(&self) -> usize {
        self.atoms.iter().map(IndexAtom::consumes).sum()
    }

    pub fn bind_to_size(&self, dims: &[usize]) -> Result<BoundIndex, IndexError> {
        let ndim = dims.len();
        let consumed = self.consumed();
        if consumed > ndim {
            return Err(IndexError::TooManyIndices { consumed, ndim });
        }
        let mut items = Vec::with_capacity(ndim);
        let mut axis = 0;
        let push_colons = |items: &mut Vec<Item>, axis: &mut usize, n: usize| {
            for _ in 0..n {
                items.push(Item::Range { axis: *axis, start: 0, len: dims[*axis], step: 1 });
                *axis += 1;
            }
        };
        for atom in &self.atoms {
            match atom {
                IndexAtom::Ellipsis => push_colons(&mut items, &mut axis, ndim - consumed),
                IndexAtom::Colon => push_colons(&mut items, &mut axis, 1),
                IndexAtom::Scalar(i) => {
                    let index = resolve_scalar(*i, axis, dims[axis])?;
                    items.push(Item::Select { axis, index });
                    axis += 1;
                }
                IndexAtom::Range(r) => {
                    let (start, len) = r.resolve(dims[axis]);
                    items.push(Item::Range { axis, start, len, step: r.step as isize });
                    axis += 1;
                }
                IndexAtom::Array(a) => {
                    let w = a.width;
                    let mut tuples = Vec::with_capacity(a.values.len());
                    for t in a.values.chunks(w) {
                        for (j, &v) in t.iter().enumerate() {
                            tuples.push(resolve_scalar(v, axis + j, dims[axis + j])?);
                        }
                    }
                    items.push(Item::Gather { axis, width: w, tuples });
                    axis += w;
                }
                IndexAtom::Mask(m) => {
                    let w = m.dims.len();
                    if dims[axis..axis + w] != m.dims[..] {
                        return Err(IndexError::MaskShape {
                            axis,
                            expected: dims[axis..axis + w].to_vec(),
                            got: m.dims.clone(),
                        });
                    }
                    let mut tuples = Vec::with_capacity(m.count() * w);
                    let mut idx = vec![0usize; w];
                    for &b in &m.values {
                        if b {
                            tuples.extend_from_slice(&idx);
                        }
                        for (k, i) in idx.iter_mut().enumerate() {
                            *i += 1;
                            if *i < m.dims[k] {
                                break;
                            }
                            *i = 0;
                        }
                    }
                    items.push(Item::Gather { axis, width: w, tuples });
                    axis += w;
                }
            }
        }
        let rest = ndim - axis;
        push_colons(&mut items, &mut axis, rest);
        Ok(BoundIndex {
            expr: self.clone(),
            dims: dims.to_vec(),
            items,
            strides: None,
            offsets: Vec::new(),
        })
    }
}

fn resolve_scalar(i: i64, axis: usize, extent: usize) -> Result<usize, IndexError> {
    let r = if i < 0 { i + extent as i64 } else { i };
    if r < 0 || r >= extent as i64 {
        return Err(IndexError::OutOfRange { axis, index: i, extent });
    }
    Ok(r as usize)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Item {
    Select { axis: usize, index: usize },
    Range { axis: usize, start: usize, len: usize, step: isize },
    Gather { axis: usize, width: usize, tuples: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindStage {
    SizeBound,
    StrideBound,
}

/// An index expression bound to a tensor size, and possibly to strides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundIndex {
    expr: IndexExpr,
    dims: Vec<usize>,
    items: Vec<Item>,
    strides: Option<Vec<isize>>,
    /// Relative byte offsets of the gathered tuples (stride-bound only).
    offsets: Vec<isize>,
}

/// How to realize an index on a concrete layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexPlan {
    /// Basic index: a view on the same bytes.
    View(Layout),
    /// Advanced index: elements are copied.
    Gather(GatherPlan),
}

/// Addressing for an advanced index: a strided layout in which one axis
/// replaces its stride by a table of relative offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatherPlan {
    pub layout: Layout,
    pub table_axis: usize,
    pub table: Vec<isize>,
}

impl GatherPlan {
    pub fn dims(&self) -> &[usize] {
        &self.layout.dims
    }

    /// Visit every output element in column-major order with the source
    /// byte offset and the matching offset under `other` (same dims).
    pub fn for_each_with<F: FnMut(usize, usize)>(&self, other: &Layout, mut f: F) {
        assert_eq!(other.dims, self.layout.dims, "paired layout must have equal dims");
        let ta = self.table_axis;
        crate::plan::for_each_index(other, |idx, o| {
            let mut off = self.layout.offset as isize;
            for (a, (&i, &s)) in idx.iter().zip(&self.layout.strides).enumerate() {
                off += if a == ta { self.table[i] } else { i as isize * s };
            }
            f(off as usize, o as usize);
        });
    }
}

impl BoundIndex {
    pub fn stage(&self) -> BindStage {
        if self.strides.is_some() {
            BindStage::StrideBound
        } else {
            BindStage::SizeBound
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn strides(&self) -> Option<&[isize]> {
        self.strides.as_deref()
    }

    /// The expression this index was bound from.
    pub fn expr(&self) -> &IndexExpr {
        &self.expr
    }

    pub fn is_basic(&self) -> bool {
        self.expr.is_basic()
    }

    /// Number of elements selected by the advanced atom, if any.
    pub fn selected(&self) -> Option<usize> {
        self.items.iter().find_map(|it| match it {
            Item::Gather { width, tuples, .. } => Some(tuples.len() / width),
            _ => None,
        })
    }

    /// Re-binding is only allowed to the same dims.
    pub fn bind_to_size(&self, dims: &[usize]) -> Result<BoundIndex, IndexError> {
        self.check_dims(dims)?;
        Ok(self.clone())
    }

    pub fn bind_to_strides(&self, strides: &[isize]) -> Result<BoundIndex, IndexError> {
        if strides.len() != self.dims.len() {
            return Err(IndexError::StridesMismatch {
                bound: self.strides.clone().unwrap_or_default(),
                got: strides.to_vec(),
            });
        }
        if let Some(bound) = &self.strides {
            if bound[..] != strides[..] {
                return Err(IndexError::StridesMismatch { bound: bound.clone(), got: strides.to_vec() });
            }
            return Ok(self.clone());
        }
        let offsets = match self.gather() {
            Some((axis, width, tuples)) => tuple_offsets(axis, width, tuples, strides),
            None => Vec::new(),
        };
        Ok(BoundIndex { strides: Some(strides.to_vec()), offsets, ..self.clone() })
    }

    fn gather(&self) -> Option<(usize, usize, &[usize])> {
        self.items.iter().find_map(|it| match it {
            Item::Gather { axis, width, tuples } => Some((*axis, *width, tuples.as_slice())),
            _ => None,
        })
    }

    fn check_dims(&self, dims: &[usize]) -> Result<(), IndexError> {
        if self.dims[..] != dims[..] {
            return Err(IndexError::DimsMismatch { bound: self.dims.clone(), got: dims.to_vec() });
        }
        Ok(())
    }

    /// Realize the index on `layout`, which must have the bound dims (and the
    /// bound strides if stride-bound).
    pub fn plan(&self, layout: &Layout) -> Result<IndexPlan, IndexError> {
        self.check_dims(&layout.dims)?;
        if let Some(bound) = &self.strides {
            if bound[..] != layout.strides[..] {
                return Err(IndexError::StridesMismatch {
                    bound: bound.clone(),
                    got: layout.strides.clone(),
                });
            }
        }
        let mut offset = layout.offset as isize;
        let mut dims = Vec::new();
        let mut strides = Vec::new();
        let mut table = None;
        let mut empty = false;
        for it in &self.items {
            match it {
                Item::Select { axis, index } => offset += *index as isize * layout.strides[*axis],
                Item::Range { axis, start, len, step } => {
                    offset += *start as isize * layout.strides[*axis];
                    empty |= *len == 0;
                    dims.push(*len);
                    strides.push(step * layout.strides[*axis]);
                }
                Item::Gather { axis, width, tuples } => {
                    let t = if self.strides.is_some() {
                        self.offsets.clone()
                    } else {
                        tuple_offsets(*axis, *width, tuples, &layout.strides)
                    };
                    empty |= t.is_empty();
                    dims.push(t.len());
                    strides.push(0);
                    table = Some((dims.len() - 1, t));
                }
            }
        }
        // empty views keep the base offset so they stay addressable
        if empty {
            offset = layout.offset as isize;
        }
        let out = Layout { offset: offset as usize, dims, strides };
        Ok(match table {
            None => IndexPlan::View(out),
            Some((table_axis, table)) => IndexPlan::Gather(GatherPlan { layout: out, table_axis, table }),
        })
    }
}

fn tuple_offsets(axis: usize, width: usize, tuples: &[usize], strides: &[isize]) -> Vec<isize> {
    tuples
        .chunks(width)
        .map(|t| t.iter().enumerate().map(|(j, &i)| i as isize * strides[axis + j]).sum())
        .collect()
}
