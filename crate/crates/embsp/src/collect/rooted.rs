//! Broadcast, gather and reduce through the shared buffer.

use embsp_core::{Category, ReduceOp, Region};

use crate::error::{Error, Result};
use crate::runtime::{SwapCause, Vp};
use crate::sched::signal::{FinishOutcome, FirstOutcome};

impl Vp<'_> {
    /// This VP's memory, valid while it owns its partition even after a swap-out.
    pub(crate) fn ram(&self, r: Region) -> &[u8] {
        // SAFETY: called only while this thread owns its partition.
        unsafe { self.sh.ctx(self.t).slice(r.offset, r.len) }
    }

    fn check_root(&self, root: usize) -> Result<()> {
        if root >= self.sh.cfg.v {
            return Err(Error::Usage(format!("root {root} is not a virtual processor (v = {})", self.sh.cfg.v)));
        }
        Ok(())
    }

    fn check_region(&self, r: Region) -> Result<()> {
        if !r.within(self.sh.cfg.mu) {
            return Err(Error::RangeOverflow { offset: r.offset as u64, len: r.len as u64, limit: self.sh.cfg.mu as u64 });
        }
        Ok(())
    }

    fn check_sigma(&self, needed: usize) -> Result<()> {
        if needed > self.sh.cfg.sigma {
            return Err(Error::BufferOverflow { needed, sigma: self.sh.cfg.sigma });
        }
        Ok(())
    }

    /// Copies `root`'s `buf` into `buf` of every VP.
    pub fn bcast(&mut self, root: usize, buf: Region) -> Result<()> {
        let sh = self.sh;
        self.check_root(root)?;
        self.check_region(buf)?;
        self.check_sigma(buf.len)?;
        assert!(self.resident, "collective entered while swapped out");
        let (p, rank) = (sh.cfg.p, sh.cfg.rank);
        let (root_rank, root_t) = (root % p, root / p);
        if self.rho == root {
            let mut data = self.bytes(buf).to_vec();
            {
                let mut area = sh.area.write();
                area.clear();
                area.extend_from_slice(&data);
            }
            sh.meters.bcast.set(data.len());
            self.em_signal_threads(&sh.sig_root, None)?;
            if p > 1 {
                sh.net.lock().bcast(root_rank, &mut data)?;
            }
        } else {
            let swapped = if rank == root_rank {
                self.em_wait_for_root(&sh.sig_root, root_t)?
            } else {
                if let FirstOutcome::First(guard) = self.em_first_thread(&sh.sig_first)? {
                    let mut data = Vec::new();
                    sh.net.lock().bcast(root_rank, &mut data)?;
                    sh.meters.bcast.set(data.len());
                    *sh.area.write() = data;
                    self.em_signal_threads(&sh.sig_first, Some(guard))?;
                }
                false
            };
            let area = sh.area.read();
            if area.len() != buf.len {
                return Err(Error::SpecMismatch { src: root, dst: self.rho, sent: area.len(), expected: buf.len });
            }
            if swapped {
                sh.write_into_context(self.q, self.t, buf.offset, &area, Category::DeliveryWrite)?;
            } else {
                self.write_own(buf.offset, &area, Category::DeliveryWrite)?;
            }
        }
        self.superstep_end("bcast")
    }

    /// Concatenates every VP's `send` at `root`'s `recv`, in rank order.
    pub fn gather(&mut self, root: usize, send: Region, recv: Region) -> Result<()> {
        let sh = self.sh;
        self.check_root(root)?;
        self.check_region(send)?;
        let (v, p, rank) = (sh.cfg.v, sh.cfg.p, sh.cfg.rank);
        let w = send.len;
        let total = v * w;
        self.check_sigma(total)?;
        if self.rho == root {
            self.check_region(recv)?;
            if recv.len != total {
                return Err(Error::SpecMismatch { src: self.rho, dst: root, sent: total, expected: recv.len });
            }
        }
        assert!(self.resident, "collective entered while swapped out");
        let root_rank = root % p;
        let data = self.bytes(send).to_vec();
        let place = |src: usize, bytes: &[u8]| -> Result<()> {
            let mut area = sh.area.write();
            if area.len() != total {
                area.resize(total, 0);
            }
            if bytes.len() != w || src >= v {
                return Err(Error::SpecMismatch { src, dst: root, sent: bytes.len(), expected: w });
            }
            area[src * w..(src + 1) * w].copy_from_slice(bytes);
            Ok(())
        };
        if p == 1 {
            place(self.rho, &data)?;
        } else {
            let mut framed = Vec::with_capacity(4 + w);
            framed.extend_from_slice(&(self.rho as u32).to_le_bytes());
            framed.extend_from_slice(&data);
            if let Some(parts) = sh.net.lock().gather(root_rank, &framed)? {
                for part in parts {
                    if part.len() < 4 {
                        return Err(Error::Protocol("short gather frame".into()));
                    }
                    let src = u32::from_le_bytes(part[..4].try_into().unwrap()) as usize;
                    place(src, &part[4..])?;
                }
            }
        }
        if rank == root_rank {
            sh.meters.gather.set(total);
            if self.rho == root {
                let swapped = match self.em_all_threads_finished(&sh.sig_finish)? {
                    FinishOutcome::Last => false,
                    FinishOutcome::Blocking(guard) => self.em_wait_threads(&sh.sig_finish, guard)?,
                };
                let area = sh.area.read();
                if swapped {
                    sh.write_into_context(self.q, self.t, recv.offset, &area[..total], Category::DeliveryWrite)?;
                } else {
                    self.write_own(recv.offset, &area[..total], Category::DeliveryWrite)?;
                }
            } else {
                self.em_thread_finished(&sh.sig_finish)?;
            }
        }
        self.superstep_end("gather")
    }

    /// Combines every VP's `send` with `op` into `root`'s `recv`.
    pub fn reduce(&mut self, root: usize, send: Region, recv: Region, op: &ReduceOp) -> Result<()> {
        let sh = self.sh;
        self.check_root(root)?;
        self.check_region(send)?;
        let nb = send.len;
        if !nb.is_multiple_of(op.width()) {
            return Err(Error::Usage(format!("reduce buffer of {nb} bytes is not a whole number of {}-byte elements", op.width())));
        }
        if self.rho == root {
            self.check_region(recv)?;
            if recv.len != nb {
                return Err(Error::SpecMismatch { src: self.rho, dst: root, sent: nb, expected: recv.len });
            }
        }
        let k = sh.cfg.k;
        self.check_sigma(k * nb)?;
        assert!(self.resident, "collective entered while swapped out");
        let (p, rank) = (sh.cfg.p, sh.cfg.rank);
        let root_rank = root % p;

        self.swap_out(&[], SwapCause::Reduce)?;
        {
            let mut slot = sh.slots[self.q].lock();
            let mine = self.ram(send);
            match slot.as_mut() {
                None => {
                    *slot = Some(mine.to_vec());
                    sh.meters.reduce.add(nb);
                }
                Some(acc) => {
                    if acc.len() != nb {
                        return Err(Error::Protocol(format!("reduce operands of {} and {nb} bytes", acc.len())));
                    }
                    op.combine(acc, mine);
                }
            }
        }
        self.step_end("reduce/combine", &mut || Ok(()))?;

        if self.rho == root || (rank != root_rank && self.t == 0) {
            let mut acc: Option<Vec<u8>> = None;
            for s in &sh.slots {
                if let Some(part) = s.lock().as_ref() {
                    match acc.as_mut() {
                        None => acc = Some(part.clone()),
                        Some(a) => op.combine(a, part),
                    }
                }
            }
            let local = acc.ok_or_else(|| Error::Protocol("reduce found no operands".into()))?;
            let result = if p > 1 { sh.net.lock().reduce(root_rank, local, op)? } else { Some(local) };
            if self.rho == root {
                let result = result.ok_or_else(|| Error::Protocol("reduce result missing at the root".into()))?;
                self.write_own(recv.offset, &result, Category::DeliveryWrite)?;
            }
        }
        self.superstep_end_with("reduce", &mut || {
            for s in &sh.slots {
                *s.lock() = None;
            }
            Ok(())
        })
    }
}
