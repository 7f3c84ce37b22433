//! Strided byte layouts: construction, view transformations and overlap
//! analysis. A layout knows nothing about the buffer it addresses beyond
//! byte offsets; the element size is passed in where it matters.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Maximum number of tensor dimensions.
pub const MAX_DIMS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutError {
    TooManyDims(usize),
    SizeOverflow,
    InvalidPermutation,
    Incompatible { from: Vec<usize>, to: Vec<usize> },
    CountMismatch { from: usize, to: usize },
    NotMatrix(usize),
    AxisOutOfRange { axis: usize, ndim: usize },
}

impl fmt::Display for LayoutError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayoutError::TooManyDims(n) => {
                write!(f, "{n} dimensions exceed the maximum of {MAX_DIMS}")
            }
            LayoutError::SizeOverflow => f.write_str("tensor size overflows the address space"),
            LayoutError::InvalidPermutation => f.write_str("axis order is not a permutation"),
            LayoutError::Incompatible { from, to } => {
                write!(f, "dimensions {from:?} cannot be broadcast to {to:?}")
            }
            LayoutError::CountMismatch { from, to } => {
                write!(f, "cannot reshape {from} elements into {to}")
            }
            LayoutError::NotMatrix(n) => write!(f, "expected a 2-D tensor, got {n} dimensions"),
            LayoutError::AxisOutOfRange { axis, ndim } => {
                write!(f, "axis {axis} out of range for {ndim} dimensions")
            }
        }
    }
}

impl core::error::Error for LayoutError {}

/// Column-major byte strides for `dims` with elements of `elem` bytes.
pub fn column_major_strides(dims: &[usize], elem: usize) -> Vec<isize> {
    let mut strides = Vec::with_capacity(dims.len());
    let mut s = elem as isize;
    for &d in dims {
        strides.push(s);
        s *= d.max(1) as isize;
    }
    strides
}

/// Number of elements, or `None` on overflow.
pub fn element_count(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Result shape of broadcasting two shapes. Shapes align on their leading
/// (fastest-varying) axes; missing trailing axes behave as extent 1.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>, LayoutError> {
    let n = a.len().max(b.len());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let da = a.get(i).copied().unwrap_or(1);
        let db = b.get(i).copied().unwrap_or(1);
        let d = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(LayoutError::Incompatible { from: a.to_vec(), to: b.to_vec() });
        };
        out.push(d);
    }
    Ok(out)
}

/// Offset and extents of a strided view. `offset` addresses the element with
/// all-zero indices; strides are signed byte distances.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    pub offset: usize,
    pub dims: Vec<usize>,
    pub strides: Vec<isize>,
}

/// Verdict of a pairwise overlap test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapVerdict {
    Disjoint,
    ExactOverlap,
    PossibleOverlap,
}

impl OverlapVerdict {
    /// Whether an operation must stage data to stay correct.
    pub fn may_conflict(self) -> bool {
        self == OverlapVerdict::PossibleOverlap
    }
}

impl Layout {
    /// Contiguous column-major layout.
    pub fn contiguous(dims: &[usize], elem: usize) -> Result<Layout, LayoutError> {
        if dims.len() > MAX_DIMS {
            return Err(LayoutError::TooManyDims(dims.len()));
        }
        element_count(dims)
            .and_then(|n| n.checked_mul(elem))
            .filter(|&n| n <= isize::MAX as usize)
            .ok_or(LayoutError::SizeOverflow)?;
        Ok(Layout { offset: 0, dims: dims.to_vec(), strides: column_major_strides(dims, elem) })
    }

    pub fn new(offset: usize, dims: Vec<usize>, strides: Vec<isize>) -> Result<Layout, LayoutError> {
        if dims.len() > MAX_DIMS {
            return Err(LayoutError::TooManyDims(dims.len()));
        }
        assert_eq!(dims.len(), strides.len(), "dims and strides differ in length");
        Ok(Layout { offset, dims, strides })
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.contains(&0)
    }

    /// Absolute byte range `[lo, hi)` touched by the view, `None` if empty.
    pub fn byte_range(&self, elem: usize) -> Option<(isize, isize)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = self.offset as isize;
        let mut hi = self.offset as isize;
        for (&d, &s) in self.dims.iter().zip(&self.strides) {
            let span = s * (d as isize - 1);
            if span < 0 {
                lo += span;
            } else {
                hi += span;
            }
        }
        Some((lo, hi + elem as isize))
    }

    /// Every addressable element lies inside a buffer of `nbytes`.
    pub fn fits(&self, elem: usize, nbytes: usize) -> bool {
        match self.byte_range(elem) {
            None => true,
            Some((lo, hi)) => lo >= 0 && hi as usize <= nbytes,
        }
    }

    /// Column-major contiguous for elements of `elem` bytes, ignoring
    /// extent-1 axes.
    pub fn is_contiguous(&self, elem: usize) -> bool {
        let mut expect = elem as isize;
        for (&d, &s) in self.dims.iter().zip(&self.strides) {
            if d == 1 {
                continue;
            }
            if s != expect {
                return false;
            }
            expect *= d as isize;
        }
        true
    }

    /// Byte offset of the element at `index`.
    pub fn offset_of(&self, index: &[usize]) -> isize {
        self.offset as isize
            + index.iter().zip(&self.strides).map(|(&i, &s)| i as isize * s).sum::<isize>()
    }

    pub fn permute(&self, order: &[usize]) -> Result<Layout, LayoutError> {
        let n = self.ndim();
        let mut seen = [false; MAX_DIMS];
        if order.len() != n {
            return Err(LayoutError::InvalidPermutation);
        }
        for &a in order {
            if a >= n || seen[a] {
                return Err(LayoutError::InvalidPermutation);
            }
            seen[a] = true;
        }
        Ok(Layout {
            offset: self.offset,
            dims: order.iter().map(|&a| self.dims[a]).collect(),
            strides: order.iter().map(|&a| self.strides[a]).collect(),
        })
    }

    /// Transpose: a vector of length n becomes a 1×n matrix, matrices swap
    /// axes and higher ranks reverse their axes.
    pub fn transpose(&self) -> Layout {
        match self.ndim() {
            0 => self.clone(),
            1 => Layout {
                offset: self.offset,
                dims: vec![1, self.dims[0]],
                strides: vec![self.strides[0], self.strides[0]],
            },
            _ => {
                let order: Vec<usize> = (0..self.ndim()).rev().collect();
                self.permute(&order).expect("reversal is a permutation")
            }
        }
    }

    /// Broadcast view onto `dims`. Extent-1 axes get stride 0; trailing
    /// source axes beyond the target rank must have extent 1.
    pub fn broadcast_to(&self, dims: &[usize]) -> Result<Layout, LayoutError> {
        if dims.len() > MAX_DIMS {
            return Err(LayoutError::TooManyDims(dims.len()));
        }
        let incompatible = || LayoutError::Incompatible { from: self.dims.clone(), to: dims.to_vec() };
        if self.dims.iter().skip(dims.len()).any(|&d| d != 1) {
            return Err(incompatible());
        }
        let mut strides = Vec::with_capacity(dims.len());
        for (i, &target) in dims.iter().enumerate() {
            let (d, s) = match self.dims.get(i) {
                Some(&d) => (d, self.strides[i]),
                None => (1, 0),
            };
            if d == target {
                strides.push(if d == 1 { 0 } else { s });
            } else if d == 1 {
                strides.push(0);
            } else {
                return Err(incompatible());
            }
        }
        Ok(Layout { offset: self.offset, dims: dims.to_vec(), strides })
    }

    /// Reshape without copying, if the new dims are expressible over the
    /// existing strides (column-major element order preserved).
    pub fn reshape_view(&self, dims: &[usize], elem: usize) -> Result<Option<Layout>, LayoutError> {
        if dims.len() > MAX_DIMS {
            return Err(LayoutError::TooManyDims(dims.len()));
        }
        let (from, to) = (self.numel(), element_count(dims).ok_or(LayoutError::SizeOverflow)?);
        if from != to {
            return Err(LayoutError::CountMismatch { from, to });
        }
        if from == 0 {
            return Ok(Some(Layout {
                offset: self.offset,
                dims: dims.to_vec(),
                strides: column_major_strides(dims, elem),
            }));
        }
        let old: Vec<(usize, isize)> = self
            .dims
            .iter()
            .zip(&self.strides)
            .filter(|(&d, _)| d != 1)
            .map(|(&d, &s)| (d, s))
            .collect();
        let mut strides = vec![0isize; dims.len()];
        let (mut oi, mut oj, mut ni, mut nj) = (0usize, 1usize, 0usize, 1usize);
        while ni < dims.len() && oi < old.len() {
            let mut np = dims[ni];
            let mut op = old[oi].0;
            while np != op {
                if np < op {
                    np *= dims[nj];
                    nj += 1;
                } else {
                    op *= old[oj].0;
                    oj += 1;
                }
            }
            for k in oi..oj - 1 {
                if old[k + 1].1 != old[k].1 * old[k].0 as isize {
                    return Ok(None);
                }
            }
            strides[ni] = old[oi].1;
            for k in ni + 1..nj {
                strides[k] = strides[k - 1] * dims[k - 1] as isize;
            }
            ni = nj;
            nj += 1;
            oi = oj;
            oj += 1;
        }
        for k in ni..dims.len() {
            strides[k] = if k == 0 { elem as isize } else { strides[k - 1] * dims[k - 1] as isize };
        }
        Ok(Some(Layout { offset: self.offset, dims: dims.to_vec(), strides }))
    }

    /// The k-th diagonal of a matrix as a vector view.
    pub fn diagonal(&self, k: isize) -> Result<Layout, LayoutError> {
        if self.ndim() != 2 {
            return Err(LayoutError::NotMatrix(self.ndim()));
        }
        let (rows, cols) = (self.dims[0] as isize, self.dims[1] as isize);
        let (r0, c0) = if k >= 0 { (0, k) } else { (-k, 0) };
        let len = (rows - r0).min(cols - c0).max(0);
        let offset = if len > 0 {
            (self.offset as isize + r0 * self.strides[0] + c0 * self.strides[1]) as usize
        } else {
            self.offset
        };
        Ok(Layout { offset, dims: vec![len as usize], strides: vec![self.strides[0] + self.strides[1]] })
    }

    /// Shift the start of the view by `delta` bytes.
    pub fn shifted(&self, delta: isize) -> Layout {
        Layout { offset: (self.offset as isize + delta) as usize, ..self.clone() }
    }

    /// Whether two distinct indices may address the same byte.
    ///
    /// Axes of extent > 1 are sorted by |stride|; each must step over the
    /// footprint of all faster axes. This may report overlap for layouts
    /// that do not overlap, never the reverse.
    pub fn self_overlap(&self, elem: usize) -> bool {
        if self.is_empty() {
            return false;
        }
        let mut axes: Vec<(usize, usize)> = self
            .dims
            .iter()
            .zip(&self.strides)
            .filter(|(&d, _)| d > 1)
            .map(|(&d, &s)| (s.unsigned_abs(), d))
            .collect();
        if axes.iter().any(|&(s, _)| s == 0) {
            return true;
        }
        axes.sort_by_key(|&(s, _)| s);
        let mut extent = elem;
        for (s, d) in axes {
            if s < extent {
                return true;
            }
            extent += s * (d - 1);
        }
        false
    }
}

/// Overlap between two views of one buffer (callers handle distinct
/// buffers, which never overlap).
pub fn pair_overlap(a: &Layout, a_elem: usize, b: &Layout, b_elem: usize) -> OverlapVerdict {
    let (Some((alo, ahi)), Some((blo, bhi))) = (a.byte_range(a_elem), b.byte_range(b_elem)) else {
        return OverlapVerdict::Disjoint;
    };
    if ahi <= blo || bhi <= alo {
        return OverlapVerdict::Disjoint;
    }
    if a_elem == b_elem && a == b {
        return OverlapVerdict::ExactOverlap;
    }
    OverlapVerdict::PossibleOverlap
}
