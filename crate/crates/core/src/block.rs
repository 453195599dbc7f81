//! Byte ranges, block rounding and the mapping from context bytes to disk.

use alloc::vec::Vec;

use crate::config::Layout;

/// A byte range inside one context, `[offset, offset + len)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Region {
    pub offset: usize,
    pub len: usize,
}

impl Region {
    pub const fn new(offset: usize, len: usize) -> Self {
        Region { offset, len }
    }

    pub fn end(&self) -> usize {
        self.offset + self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// True if both ranges share at least one byte.
    pub fn overlaps(&self, other: &Region) -> bool {
        !self.is_empty() && !other.is_empty() && self.offset < other.end() && other.offset < self.end()
    }

    pub fn within(&self, limit: usize) -> bool {
        self.offset.checked_add(self.len).is_some_and(|e| e <= limit)
    }
}

/// A byte range in one disk's backing store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DiskRegion {
    pub disk: usize,
    pub offset: u64,
    pub len: u64,
}

impl DiskRegion {
    pub fn is_aligned(&self, b: usize) -> bool {
        let b = b as u64;
        self.offset.is_multiple_of(b) && self.len.is_multiple_of(b)
    }
}

pub fn align_down(x: usize, b: usize) -> usize {
    x - x % b
}

pub fn align_up(x: usize, b: usize) -> usize {
    x.div_ceil(b) * b
}

/// Smallest block-aligned range containing `r`.
pub fn cover(r: Region, b: usize) -> Region {
    if r.is_empty() {
        return Region::new(align_down(r.offset, b), 0);
    }
    let start = align_down(r.offset, b);
    Region::new(start, align_up(r.end(), b) - start)
}

/// Largest block-aligned range inside `r`, if any.
pub fn interior(r: Region, b: usize) -> Option<Region> {
    let start = align_up(r.offset, b);
    let end = align_down(r.end(), b);
    (start < end).then(|| Region::new(start, end - start))
}

/// Indices of blocks that `r` touches but does not fully cover; at most two.
pub fn partial_blocks(r: Region, b: usize) -> impl Iterator<Item = usize> {
    let mut out = [None, None];
    if !r.is_empty() {
        let first = r.offset / b;
        let last = (r.end() - 1) / b;
        let head = !r.offset.is_multiple_of(b);
        let tail = !r.end().is_multiple_of(b);
        if first == last {
            if head || tail {
                out[0] = Some(first);
            }
        } else {
            if head {
                out[0] = Some(first);
            }
            if tail {
                out[1] = Some(last);
            }
        }
    }
    out.into_iter().flatten()
}

/// Sorts and merges touching or overlapping ranges; drops empty ones.
pub fn merge(regions: &[Region]) -> Vec<Region> {
    let mut v: Vec<Region> = regions.iter().copied().filter(|r| !r.is_empty()).collect();
    v.sort_unstable();
    let mut out: Vec<Region> = Vec::with_capacity(v.len());
    for r in v {
        match out.last_mut() {
            Some(last) if r.offset <= last.end() => {
                let end = last.end().max(r.end());
                last.len = end - last.offset;
            }
            _ => out.push(r),
        }
    }
    out
}

/// `a \ b` for merged, sorted inputs.
pub fn subtract(a: &[Region], b: &[Region]) -> Vec<Region> {
    let mut out = Vec::new();
    let mut j = 0;
    for r in a {
        let mut start = r.offset;
        let end = r.end();
        while j < b.len() && b[j].end() <= start {
            j += 1;
        }
        let mut i = j;
        while start < end && i < b.len() && b[i].offset < end {
            if b[i].offset > start {
                out.push(Region::new(start, b[i].offset - start));
            }
            start = start.max(b[i].end());
            i += 1;
        }
        if start < end {
            out.push(Region::new(start, end - start));
        }
    }
    out
}

pub fn total_len(regions: &[Region]) -> usize {
    regions.iter().map(|r| r.len).sum()
}

/// Block runs holding at least one byte of `base \ skip`.
///
/// `base` and `skip` may be unsorted; the result is sorted, merged and block aligned.
pub fn blocks_outside(base: &[Region], skip: &[Region], b: usize) -> Vec<Region> {
    let keep = subtract(&merge(base), &merge(skip));
    let widened: Vec<Region> = keep.iter().map(|r| cover(*r, b)).collect();
    merge(&widened)
}

/// Maps context bytes of local thread `t` onto disks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContextLayout {
    pub layout: Layout,
    pub disks: usize,
    pub mu: usize,
    pub block: usize,
}

impl ContextLayout {
    pub fn new(layout: Layout, disks: usize, mu: usize, block: usize) -> Self {
        ContextLayout { layout, disks, mu, block }
    }

    /// Disk placement of `r` in thread `t`'s context, as contiguous runs in context order.
    ///
    /// With the striped layout, `r` is split at block boundaries; it need not be aligned.
    pub fn home(&self, t: usize, r: Region) -> Vec<DiskRegion> {
        debug_assert!(r.within(self.mu));
        let mut out: Vec<DiskRegion> = Vec::new();
        if r.is_empty() {
            return out;
        }
        match self.layout {
            Layout::Whole => {
                let base = (t / self.disks) as u64 * self.mu as u64;
                out.push(DiskRegion { disk: t % self.disks, offset: base + r.offset as u64, len: r.len as u64 });
            }
            Layout::Striped => {
                let per_ctx = self.mu / self.block;
                let mut pos = r.offset;
                while pos < r.end() {
                    let j = pos / self.block;
                    let in_block = pos % self.block;
                    let take = (self.block - in_block).min(r.end() - pos);
                    let g = t * per_ctx + j;
                    let disk = g % self.disks;
                    let offset = ((g / self.disks) * self.block + in_block) as u64;
                    match out.last_mut() {
                        Some(last) if last.disk == disk && last.offset + last.len == offset => {
                            last.len += take as u64;
                        }
                        _ => out.push(DiskRegion { disk, offset, len: take as u64 }),
                    }
                    pos += take;
                }
            }
        }
        out
    }

    /// Size of disk `disk`'s backing file when hosting `threads` contexts.
    pub fn file_len(&self, disk: usize, threads: usize) -> u64 {
        match self.layout {
            Layout::Whole => {
                let hosted = if disk < threads { (threads - disk).div_ceil(self.disks) } else { 0 };
                (hosted * self.mu) as u64
            }
            Layout::Striped => {
                let blocks = threads * (self.mu / self.block);
                let hosted = if disk < blocks { (blocks - disk).div_ceil(self.disks) } else { 0 };
                (hosted * self.block) as u64
            }
        }
    }
}
