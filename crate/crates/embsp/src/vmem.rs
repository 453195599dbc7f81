//! Moving contexts between memory partitions and disk.
//!
//! A swap-out writes every block holding a byte of the base set that is not
//! skipped. The base set is the whole context in strict mode and the allocated
//! regions otherwise. Logical counts follow the swap accounting: strict mode
//! charges μ minus the skipped bytes, fine mode charges the blocks written.

use embsp_core::block::{blocks_outside, cover, interior, merge, partial_blocks, total_len};
use embsp_core::{AllocTable, Category, Region};

use crate::error::Result;
use crate::runtime::{Shared, SwapCause, SwapDir, SwapEvent, Vp};

impl Shared {
    /// Writes block-aligned context bytes `r` of thread `t` from `src`.
    pub(crate) fn put_blocks(&self, q: usize, t: usize, r: Region, src: &[u8], cat: Category) -> Result<()> {
        debug_assert_eq!(src.len(), r.len);
        let mut at = 0;
        for dr in self.layout.home(t, r) {
            let len = dr.len as usize;
            self.driver.write(q, dr, &src[at..at + len], cat)?;
            at += len;
        }
        Ok(())
    }

    /// Reads block-aligned context bytes `r` of thread `t` into `dst`.
    pub(crate) fn get_blocks(&self, q: usize, t: usize, r: Region, dst: &mut [u8], cat: Category) -> Result<()> {
        debug_assert_eq!(dst.len(), r.len);
        let mut at = 0;
        for dr in self.layout.home(t, r) {
            let len = dr.len as usize;
            self.driver.read(q, dr, &mut dst[at..at + len], cat)?;
            at += len;
        }
        Ok(())
    }

    fn swap_base(&self, alloc: &AllocTable) -> Vec<Region> {
        if self.cfg.strict_accounting {
            vec![Region::new(0, self.cfg.mu)]
        } else {
            alloc.allocated().collect()
        }
    }

    /// Writes thread `t`'s partition to its disk home, skipping `skip`. Returns the logical bytes.
    pub(crate) fn swap_out(&self, q: usize, t: usize, alloc: &AllocTable, skip: &[Region]) -> Result<u64> {
        let b = self.cfg.block_size;
        let runs = blocks_outside(&self.swap_base(alloc), skip, b);
        let ram = self.ctx(t);
        for r in &runs {
            // SAFETY: `t` owns its partition.
            let src = unsafe { ram.slice(r.offset, r.len) };
            self.put_blocks(q, t, *r, src, Category::SwapOut)?;
        }
        let logical = if self.cfg.strict_accounting {
            let skipped: usize = merge(skip)
                .iter()
                .map(|s| s.end().min(self.cfg.mu).saturating_sub(s.offset))
                .sum();
            (self.cfg.mu - skipped) as u64
        } else {
            total_len(&runs) as u64
        };
        self.counters.add_logical(Category::SwapOut, logical);
        Ok(logical)
    }

    /// Reads thread `t`'s context from disk into its partition.
    pub(crate) fn swap_in(&self, q: usize, t: usize, alloc: &AllocTable) -> Result<u64> {
        let b = self.cfg.block_size;
        let runs = blocks_outside(&self.swap_base(alloc), &[], b);
        let ram = self.ctx(t);
        for r in &runs {
            // SAFETY: `t` owns its partition.
            let dst = unsafe { ram.slice_mut(r.offset, r.len) };
            self.get_blocks(q, t, *r, dst, Category::SwapIn)?;
        }
        let logical = if self.cfg.strict_accounting { self.cfg.mu as u64 } else { total_len(&runs) as u64 };
        self.counters.add_logical(Category::SwapIn, logical);
        Ok(logical)
    }

    /// Writes `data` at `offset` of thread `t`'s swapped-out context.
    ///
    /// Whole blocks go straight to disk; partial blocks are read, patched and written back.
    pub(crate) fn write_into_context(&self, q: usize, t: usize, offset: usize, data: &[u8], cat: Category) -> Result<()> {
        let r = Region::new(offset, data.len());
        if r.is_empty() {
            return Ok(());
        }
        if !self.explicit {
            // SAFETY: the protocol gives this region a single writer.
            unsafe { self.ctx(t).write(offset, data) };
            self.counters.record_write(cat, data.len() as u64);
        } else {
            let b = self.cfg.block_size;
            if let Some(int) = interior(r, b) {
                let from = int.offset - offset;
                self.put_blocks(q, t, int, &data[from..from + int.len], cat)?;
            }
            for blk in partial_blocks(r, b) {
                let br = Region::new(blk * b, b);
                let mut buf = vec![0u8; b];
                self.get_blocks(q, t, br, &mut buf, cat)?;
                let lo = r.offset.max(br.offset);
                let hi = r.end().min(br.end());
                buf[lo - br.offset..hi - br.offset].copy_from_slice(&data[lo - offset..hi - offset]);
                self.put_blocks(q, t, br, &buf, cat)?;
            }
        }
        self.counters.add_logical(cat, data.len() as u64);
        Ok(())
    }

    /// Reads `r` of thread `t`'s context from disk into `dst`.
    pub(crate) fn read_from_context(&self, q: usize, t: usize, r: Region, dst: &mut [u8], cat: Category) -> Result<()> {
        if r.is_empty() {
            return Ok(());
        }
        if !self.explicit {
            // SAFETY: nobody writes the region while it is read.
            unsafe { self.ctx(t).read(r.offset, dst) };
            self.counters.record_read(cat, dst.len() as u64);
        } else {
            let c = cover(r, self.cfg.block_size);
            let mut buf = vec![0u8; c.len];
            self.get_blocks(q, t, c, &mut buf, cat)?;
            dst.copy_from_slice(&buf[r.offset - c.offset..r.end() - c.offset]);
        }
        self.counters.add_logical(cat, r.len as u64);
        Ok(())
    }
}

impl Vp<'_> {
    fn event(&self, dir: SwapDir, cause: SwapCause, logical: u64) {
        self.sh.record(SwapEvent { phase: self.sh.sched.phase(), thread: self.t, rho: self.rho, dir, cause, logical });
    }

    /// Swaps the context out; the partition still holds it until released.
    pub(crate) fn swap_out(&mut self, skip: &[Region], cause: SwapCause) -> Result<()> {
        if !self.explicit() || !self.resident {
            return Ok(());
        }
        let l = self.sh.swap_out(self.q, self.t, &self.alloc, skip)?;
        self.resident = false;
        self.event(SwapDir::Out, cause, l);
        Ok(())
    }

    pub(crate) fn swap_in(&mut self, cause: SwapCause) -> Result<()> {
        if self.explicit() {
            let l = self.sh.swap_in(self.q, self.t, &self.alloc)?;
            self.event(SwapDir::In, cause, l);
        }
        self.resident = true;
        Ok(())
    }

    /// Writes into this VP's own context, wherever it currently lives.
    pub(crate) fn write_own(&mut self, offset: usize, data: &[u8], cat: Category) -> Result<()> {
        if self.resident || !self.explicit() {
            // SAFETY: the VP runs and owns its memory.
            unsafe { self.sh.ctx(self.t).write(offset, data) };
            Ok(())
        } else {
            self.sh.write_into_context(self.q, self.t, offset, data, cat)
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::runtime::Runtime;
    use embsp_core::{Category, DriverKind, SimConfig};

    fn cfg(driver: DriverKind, strict: bool, dir: &std::path::Path) -> SimConfig {
        let mut c = SimConfig::new(1, 2, 1, 8 * 512);
        c.block_size = 512;
        c.driver = driver;
        c.strict_accounting = strict;
        c.disk_paths = vec![dir.to_string_lossy().into_owned()];
        c
    }

    #[test]
    fn contexts_survive_swaps() {
        let dir = tempfile::tempdir().unwrap();
        for driver in DriverKind::ALL {
            for strict in [false, true] {
                let rt = Runtime::new(cfg(driver, strict, dir.path())).unwrap();
                let rep = rt
                    .run(|vp| {
                        let r = vp.alloc(1000)?;
                        let tag = vp.rank() as u8 + 1;
                        vp.bytes_mut(r).iter_mut().enumerate().for_each(|(i, b)| *b = tag ^ i as u8);
                        for _ in 0..3 {
                            vp.barrier()?;
                        }
                        Ok(vp.bytes(r).iter().enumerate().all(|(i, b)| *b == tag ^ i as u8))
                    })
                    .unwrap();
                assert!(rep.results.iter().all(|ok| *ok), "{driver} strict={strict}");
                let c = rep.counters;
                if driver == DriverKind::Mmap {
                    assert_eq!(c.swap_in_bytes() + c.swap_out_bytes(), 0);
                } else {
                    let per = if strict { 8 * 512 } else { 1024 };
                    assert_eq!(c.swap_out_bytes(), 2 * 3 * per, "{driver} strict={strict}");
                    assert_eq!(c.swap_in_bytes(), 2 * 3 * per);
                    assert_eq!(c.physical(Category::SwapOut), if strict { 2 * 3 * 4096 } else { 2 * 3 * 1024 });
                }
                assert_eq!(c.physical_total(), c.read_bytes + c.write_bytes);
            }
        }
    }
}
