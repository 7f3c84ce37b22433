//! Iteration plans over one or more strided views of equal dims.
//!
//! Canonicalization drops extent-1 axes, sorts the rest by the absolute
//! stride of the first view and merges consecutive axes whenever every view
//! is contiguous across them. Fewer, denser axes mean longer inner loops.

use alloc::vec::Vec;

use crate::layout::{Layout, MAX_DIMS};

/// Maximum number of views iterated jointly.
pub const MAX_VIEWS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    dims: Vec<usize>,
    /// `strides[axis * views + v]`
    strides: Vec<isize>,
    starts: Vec<isize>,
    views: usize,
}

impl Plan {
    fn check(layouts: &[&Layout]) {
        assert!(!layouts.is_empty() && layouts.len() <= MAX_VIEWS, "1..={MAX_VIEWS} views");
        let dims = &layouts[0].dims;
        assert!(layouts.iter().all(|l| &l.dims == dims), "views must have equal dims");
    }

    /// Canonical plan: extent-1 axes dropped, axes sorted by |stride| of the
    /// first view (ties keep axis order), contiguous runs merged.
    pub fn canonical(layouts: &[&Layout]) -> Plan {
        Self::check(layouts);
        let views = layouts.len();
        let starts = layouts.iter().map(|l| l.offset as isize).collect();
        let first = layouts[0];
        if first.is_empty() {
            return Plan { dims: alloc::vec![0], strides: alloc::vec![0; views], starts, views };
        }
        let mut axes: Vec<usize> = (0..first.ndim()).filter(|&a| first.dims[a] != 1).collect();
        axes.sort_by_key(|&a| first.strides[a].unsigned_abs());

        let mut dims: Vec<usize> = Vec::with_capacity(axes.len());
        let mut strides: Vec<isize> = Vec::with_capacity(axes.len() * views);
        for a in axes {
            if let Some(last) = dims.last_mut() {
                let base = strides.len() - views;
                let mergeable = layouts
                    .iter()
                    .enumerate()
                    .all(|(v, l)| l.strides[a] == strides[base + v] * *last as isize);
                if mergeable {
                    *last *= first.dims[a];
                    continue;
                }
            }
            dims.push(first.dims[a]);
            strides.extend(layouts.iter().map(|l| l.strides[a]));
        }
        Plan { dims, strides, starts, views }
    }

    /// Plan that follows the views' own axis order without any reordering.
    pub fn naive(layouts: &[&Layout]) -> Plan {
        Self::check(layouts);
        let views = layouts.len();
        let first = layouts[0];
        let mut strides = Vec::with_capacity(first.ndim() * views);
        for a in 0..first.ndim() {
            strides.extend(layouts.iter().map(|l| l.strides[a]));
        }
        Plan {
            dims: first.dims.clone(),
            strides,
            starts: layouts.iter().map(|l| l.offset as isize).collect(),
            views,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn stride(&self, axis: usize, view: usize) -> isize {
        self.strides[axis * self.views + view]
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    /// Replace the starting offsets, keeping dims and strides.
    pub fn rebase(&mut self, starts: &[isize]) {
        self.starts.copy_from_slice(starts);
    }

    /// Call `f` with the byte offset of each view for every element.
    #[inline]
    pub fn for_each<F: FnMut(&[usize])>(&self, mut f: F) {
        let nv = self.views;
        let nd = self.dims.len();
        if self.dims.contains(&0) {
            return;
        }
        let mut offs = [0isize; MAX_VIEWS];
        offs[..nv].copy_from_slice(&self.starts);
        let mut cur = [0usize; MAX_VIEWS];
        if nd == 0 {
            for v in 0..nv {
                cur[v] = offs[v] as usize;
            }
            f(&cur[..nv]);
            return;
        }
        let inner = self.dims[0];
        let mut s0 = [0isize; MAX_VIEWS];
        s0[..nv].copy_from_slice(&self.strides[..nv]);
        let mut idx = [0usize; MAX_DIMS];
        loop {
            let mut o = offs;
            for _ in 0..inner {
                for v in 0..nv {
                    cur[v] = o[v] as usize;
                    o[v] += s0[v];
                }
                f(&cur[..nv]);
            }
            let mut ax = 1;
            loop {
                if ax == nd {
                    return;
                }
                idx[ax] += 1;
                for v in 0..nv {
                    offs[v] += self.strides[ax * nv + v];
                }
                if idx[ax] < self.dims[ax] {
                    break;
                }
                for v in 0..nv {
                    offs[v] -= self.strides[ax * nv + v] * self.dims[ax] as isize;
                }
                idx[ax] = 0;
                ax += 1;
            }
        }
    }
}

/// Visit every index of `dims` in column-major order together with its byte
/// offset under `layout`.
pub fn for_each_index<F: FnMut(&[usize], isize)>(layout: &Layout, mut f: F) {
    if layout.is_empty() {
        return;
    }
    let nd = layout.ndim();
    let mut idx = [0usize; MAX_DIMS];
    let mut off = layout.offset as isize;
    loop {
        f(&idx[..nd], off);
        let mut ax = 0;
        loop {
            if ax == nd {
                return;
            }
            idx[ax] += 1;
            off += layout.strides[ax];
            if idx[ax] < layout.dims[ax] {
                break;
            }
            off -= layout.strides[ax] * layout.dims[ax] as isize;
            idx[ax] = 0;
            ax += 1;
        }
    }
}
