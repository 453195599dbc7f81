//! First-fit allocator over one context's μ bytes.
//!
//! Records tile `[0, μ)` in offset order and adjacent free records are always
//! merged, so the allocated set is exactly what fine-grained swapping must move.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::block::Region;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Record {
    size: usize,
    free: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AllocError {
    #[error("out of memory: requested {requested} bytes, largest free chunk {largest_free}")]
    OutOfMemory { requested: usize, largest_free: usize },
    #[error("allocation size must be positive")]
    ZeroSize,
    #[error("no allocation starts at offset {0}")]
    UnknownOffset(usize),
    #[error("double free at offset {0}")]
    DoubleFree(usize),
}

/// Result of [`AllocTable::realloc`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Realloc {
    /// The record was resized where it stands.
    InPlace(usize),
    /// A new record was allocated; the caller copies `keep` bytes and the old one is already freed.
    Moved { from: usize, to: usize, keep: usize },
}

#[derive(Clone, Debug)]
pub struct AllocTable {
    capacity: usize,
    records: BTreeMap<usize, Record>,
}

impl AllocTable {
    pub fn new(capacity: usize) -> Self {
        let mut records = BTreeMap::new();
        if capacity > 0 {
            records.insert(0, Record { size: capacity, free: true });
        }
        AllocTable { capacity, records }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Lowest-offset free chunk that fits `size` bytes.
    pub fn alloc(&mut self, size: usize) -> Result<usize, AllocError> {
        self.alloc_aligned(size, 1)
    }

    /// Like [`alloc`](Self::alloc) with the returned offset a multiple of `align`.
    pub fn alloc_aligned(&mut self, size: usize, align: usize) -> Result<usize, AllocError> {
        if size == 0 {
            return Err(AllocError::ZeroSize);
        }
        let align = align.max(1);
        let found = self.records.iter().find_map(|(&off, r)| {
            if !r.free {
                return None;
            }
            let start = off.div_ceil(align) * align;
            let pad = start - off;
            (r.size >= pad + size).then_some((off, start, r.size))
        });
        let Some((off, start, chunk)) = found else {
            return Err(AllocError::OutOfMemory { requested: size, largest_free: self.largest_free() });
        };
        if start > off {
            self.records.insert(off, Record { size: start - off, free: true });
        }
        self.records.insert(start, Record { size, free: false });
        let rest = off + chunk - (start + size);
        if rest > 0 {
            self.records.insert(start + size, Record { size: rest, free: true });
        }
        Ok(start)
    }

    pub fn free(&mut self, offset: usize) -> Result<(), AllocError> {
        match self.records.get_mut(&offset) {
            None => return Err(AllocError::UnknownOffset(offset)),
            Some(r) if r.free => return Err(AllocError::DoubleFree(offset)),
            Some(r) => r.free = true,
        }
        self.coalesce(offset);
        Ok(())
    }

    /// Size of the allocated record at `offset`.
    pub fn size_of(&self, offset: usize) -> Option<usize> {
        self.records.get(&offset).filter(|r| !r.free).map(|r| r.size)
    }

    /// Resize the allocation at `offset`, in place when the following chunk allows it.
    pub fn realloc(&mut self, offset: usize, size: usize) -> Result<Realloc, AllocError> {
        if size == 0 {
            return Err(AllocError::ZeroSize);
        }
        let old = match self.records.get(&offset) {
            None => return Err(AllocError::UnknownOffset(offset)),
            Some(r) if r.free => return Err(AllocError::UnknownOffset(offset)),
            Some(r) => r.size,
        };
        if size <= old {
            self.records.insert(offset, Record { size, free: false });
            if size < old {
                self.records.insert(offset + size, Record { size: old - size, free: true });
                self.coalesce(offset + size);
            }
            return Ok(Realloc::InPlace(offset));
        }
        let next = offset + old;
        if let Some(r) = self.records.get(&next).copied() {
            if r.free && old + r.size >= size {
                self.records.remove(&next);
                self.records.insert(offset, Record { size, free: false });
                let rest = old + r.size - size;
                if rest > 0 {
                    self.records.insert(offset + size, Record { size: rest, free: true });
                }
                return Ok(Realloc::InPlace(offset));
            }
        }
        let to = self.alloc(size)?;
        self.free(offset)?;
        Ok(Realloc::Moved { from: offset, to, keep: old })
    }

    fn coalesce(&mut self, offset: usize) {
        let mut start = offset;
        let mut size = self.records[&offset].size;
        if let Some((&prev, r)) = self.records.range(..offset).next_back() {
            if r.free {
                size += r.size;
                start = prev;
                self.records.remove(&offset);
            }
        }
        let next = start + size;
        if let Some(r) = self.records.get(&next).copied() {
            if r.free {
                size += r.size;
                self.records.remove(&next);
            }
        }
        self.records.insert(start, Record { size, free: true });
    }

    pub fn largest_free(&self) -> usize {
        self.records.values().filter(|r| r.free).map(|r| r.size).max().unwrap_or(0)
    }

    pub fn allocated_bytes(&self) -> usize {
        self.records.values().filter(|r| !r.free).map(|r| r.size).sum()
    }

    /// Allocated records in offset order.
    pub fn allocated(&self) -> impl Iterator<Item = Region> + '_ {
        self.records.iter().filter(|(_, r)| !r.free).map(|(&o, r)| Region::new(o, r.size))
    }

    /// All records as `(region, free)` in offset order.
    pub fn records(&self) -> Vec<(Region, bool)> {
        self.records.iter().map(|(&o, r)| (Region::new(o, r.size), r.free)).collect()
    }

    pub fn reset(&mut self) {
        *self = AllocTable::new(self.capacity);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_fit_examples() {
        let mut t = AllocTable::new(1024);
        assert_eq!(t.alloc(100), Ok(0));
        assert_eq!(t.alloc(50), Ok(100));
        t.free(0).unwrap();
        assert_eq!(t.alloc(80), Ok(0));
        assert!(matches!(t.alloc(1025), Err(AllocError::OutOfMemory { requested: 1025, .. })));
    }

    #[test]
    fn coalescing() {
        let mut t = AllocTable::new(300);
        let a = t.alloc(100).unwrap();
        let b = t.alloc(100).unwrap();
        let _c = t.alloc(100).unwrap();
        t.free(b).unwrap();
        t.free(a).unwrap();
        assert_eq!(t.records()[0], (Region::new(0, 200), true));
        assert_eq!(t.records().len(), 2);
    }

    #[test]
    fn free_errors() {
        let mut t = AllocTable::new(64);
        assert_eq!(t.free(3), Err(AllocError::UnknownOffset(3)));
        let a = t.alloc(8).unwrap();
        t.free(a).unwrap();
        assert_eq!(t.free(a), Err(AllocError::DoubleFree(a)));
    }

    #[test]
    fn out_of_memory_reports_largest() {
        let mut t = AllocTable::new(100);
        t.alloc(30).unwrap();
        let b = t.alloc(30).unwrap();
        t.alloc(30).unwrap();
        t.free(b).unwrap();
        assert_eq!(t.alloc(40), Err(AllocError::OutOfMemory { requested: 40, largest_free: 30 }));
    }

    #[test]
    fn aligned_alloc_pads() {
        let mut t = AllocTable::new(64);
        t.alloc(3).unwrap();
        assert_eq!(t.alloc_aligned(8, 8), Ok(8));
        assert_eq!(t.alloc(5), Ok(3));
    }

    #[test]
    fn realloc_cases() {
        let mut t = AllocTable::new(100);
        let a = t.alloc(10).unwrap();
        assert_eq!(t.realloc(a, 20), Ok(Realloc::InPlace(0)));
        let b = t.alloc(10).unwrap();
        assert_eq!(t.realloc(a, 30), Ok(Realloc::Moved { from: 0, to: 30, keep: 20 }));
        assert_eq!(t.size_of(30), Some(30));
        assert_eq!(t.realloc(30, 5), Ok(Realloc::InPlace(30)));
        assert_eq!(t.size_of(b), Some(10));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Alloc(usize),
        Free(usize),
        Realloc(usize, usize),
    }

    proptest! {
        #[test]
        fn records_tile(ops in proptest::collection::vec(prop_oneof![
            (1usize..200).prop_map(Op::Alloc),
            (0usize..16).prop_map(Op::Free),
            ((0usize..16), (1usize..200)).prop_map(|(i, s)| Op::Realloc(i, s)),
        ], 0..60)) {
            let mut t = AllocTable::new(1000);
            let mut live: Vec<usize> = Vec::new();
            for op in ops {
                match op {
                    Op::Alloc(s) => if let Ok(o) = t.alloc(s) { live.push(o) },
                    Op::Free(i) => if !live.is_empty() {
                        let o = live.remove(i % live.len());
                        t.free(o).unwrap();
                    },
                    Op::Realloc(i, s) => if !live.is_empty() {
                        let idx = i % live.len();
                        match t.realloc(live[idx], s) {
                            Ok(Realloc::InPlace(_)) => {}
                            Ok(Realloc::Moved { to, .. }) => live[idx] = to,
                            Err(_) => {}
                        }
                    },
                }
                let recs = t.records();
                let mut pos = 0;
                let mut prev_free = false;
                for (r, free) in &recs {
                    prop_assert_eq!(r.offset, pos);
                    prop_assert!(r.len > 0);
                    prop_assert!(!(prev_free && *free));
                    prev_free = *free;
                    pos = r.end();
                }
                prop_assert_eq!(pos, 1000);
                let mut sorted = live.clone();
                sorted.sort_unstable();
                let alloc_offsets: Vec<usize> = t.allocated().map(|r| r.offset).collect();
                prop_assert_eq!(sorted, alloc_offsets);
            }
        }
    }
}
