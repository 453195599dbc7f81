//! All-to-all personalised communication with direct delivery.
//!
//! Superstep 1: each VP seeds the boundary cache with its receive blocks,
//! swaps out everything but its receive regions, publishes its receive offsets
//! and, after its round has synchronised, writes each local message straight
//! into the receiver's disk context if the receiver has already published.
//! Superstep 2: the remaining local messages are read back from the sender's
//! context and delivered; with several real processors the remote messages are
//! exchanged in chunks of α destination threads. Superstep 3: every receiver
//! flushes its boundary blocks.

use embsp_core::block::{interior, partial_blocks};
use embsp_core::{Category, MsgSpec, Region};

use super::{decode_frames, encode_frame, Frame, FRAME_HEADER};
use crate::error::{Error, Result};
use crate::runtime::{SwapCause, Vp};

impl Vp<'_> {
    /// Checks the σ bound after `added` bytes joined the all-to-all buffers.
    fn charge_alltoallv(&self, added: usize) -> Result<()> {
        let now = self.sh.meters.alltoallv.add(added);
        if now > self.sh.cfg.sigma {
            return Err(Error::BufferOverflow { needed: now, sigma: self.sh.cfg.sigma });
        }
        Ok(())
    }

    fn release_alltoallv(&self, bytes: usize) {
        self.sh.meters.alltoallv.sub(bytes);
    }

    /// Writes `buf[src_off..src_off + dest.len]` into receiver `tj`'s disk context at `dest`.
    ///
    /// Whole destination blocks are written directly, with the source moved to
    /// block alignment for the write and restored afterwards; the partial
    /// blocks at either end are patched into the boundary cache.
    fn deliver_bytes(&self, buf: &mut [u8], src_off: usize, tj: usize, dest: Region) -> Result<()> {
        let sh = self.sh;
        let len = dest.len;
        if len == 0 {
            return Ok(());
        }
        if !sh.explicit {
            // SAFETY: receive regions are disjoint, so this range has one writer.
            unsafe { sh.ctx(tj).write(dest.offset, &buf[src_off..src_off + len]) };
            sh.counters.record_write(Category::DeliveryWrite, len as u64);
        } else {
            let b = sh.cfg.block_size;
            if let Some(int) = interior(dest, b) {
                let a = src_off + (int.offset - dest.offset);
                let shift = a % b;
                if shift == 0 {
                    sh.put_blocks(self.q, tj, int, &buf[a..a + int.len], Category::DeliveryWrite)?;
                } else {
                    let saved = buf[a - shift..a].to_vec();
                    buf.copy_within(a..a + int.len, a - shift);
                    let res = sh.put_blocks(self.q, tj, int, &buf[a - shift..a - shift + int.len], Category::DeliveryWrite);
                    buf.copy_within(a - shift..a - shift + int.len, a);
                    buf[a - shift..a].copy_from_slice(&saved);
                    res?;
                }
            }
            for blk in partial_blocks(dest, b) {
                sh.cache.patch(tj, dest, &buf[src_off..src_off + len], blk)?;
            }
        }
        sh.counters.add_logical(Category::DeliveryWrite, len as u64);
        Ok(())
    }

    fn receive_region(&self, src: usize, dst: usize, sent: usize) -> Result<(usize, Region)> {
        let p = self.sh.cfg.p;
        let tj = dst / p;
        let dest = self.sh.table.entry(tj, src);
        if dest.len != sent {
            return Err(Error::SpecMismatch { src, dst, sent, expected: dest.len });
        }
        Ok((tj, dest))
    }

    /// Delivers message `msg` of this VP's resident partition to global VP `j`.
    fn deliver_from_partition(&mut self, msg: Region, j: usize) -> Result<()> {
        let (tj, dest) = self.receive_region(self.rho, j, msg.len)?;
        let span = self.sh.ctx(self.t);
        // SAFETY: this thread owns its partition (or mapped home), and the
        // message never overlaps a receive region.
        let whole = unsafe { span.slice_mut(0, span.len()) };
        if self.sh.explicit {
            self.deliver_bytes(whole, msg.offset, tj, dest)
        } else {
            let mut copy = whole[msg.offset..msg.end()].to_vec();
            self.deliver_bytes(&mut copy, 0, tj, dest)
        }
    }

    /// Reads message `msg` back from this VP's context.
    fn load_message(&self, msg: Region) -> Result<Vec<u8>> {
        let mut data = vec![0u8; msg.len];
        self.sh.read_from_context(self.q, self.t, msg, &mut data, Category::DeliveryRead)?;
        Ok(data)
    }

    pub fn alltoallv(&mut self, spec: &MsgSpec) -> Result<()> {
        let sh = self.sh;
        let (v, p, rank) = (sh.cfg.v, sh.cfg.p, sh.cfg.rank);
        spec.validate(v, sh.cfg.mu)?;
        assert!(self.resident, "collective entered while swapped out");

        let mut seeded = 0;
        if self.explicit() {
            let span = sh.ctx(self.t);
            // SAFETY: resident context of this thread.
            seeded = sh.cache.seed(self.t, &spec.recv, unsafe { span.slice(0, span.len()) });
            sh.meters.cache.add(seeded);
            self.charge_alltoallv(seeded)?;
        }
        self.swap_out(&spec.recv, SwapCause::Alltoallv)?;
        sh.table.publish(self.t, &spec.recv);
        self.jitter();
        sh.sched.round_sync(self.t, &mut || Ok(()))?;

        let mut pending = Vec::new();
        for (j, &msg) in spec.send.iter().enumerate() {
            if j % p != rank {
                continue;
            }
            if sh.table.ready(j / p) {
                self.deliver_from_partition(msg, j)?;
                sh.counters.add_direct(1);
            } else {
                pending.push(j);
            }
        }
        self.step_end("alltoallv/direct", &mut || Ok(()))?;

        for j in pending {
            let msg = spec.send[j];
            let mut data = self.load_message(msg)?;
            let (tj, dest) = self.receive_region(self.rho, j, msg.len)?;
            self.deliver_bytes(&mut data, 0, tj, dest)?;
            sh.counters.add_indirect(1);
        }
        if p > 1 {
            self.exchange_remote(spec)?;
        }
        self.step_end("alltoallv/deliver", &mut || {
            sh.table.reset();
            Ok(())
        })?;

        if self.explicit() {
            let blocks = sh.cache.drain(self.t);
            let b = sh.cfg.block_size;
            for (blk, data) in &blocks {
                sh.put_blocks(self.q, self.t, Region::new(blk * b, b), data, Category::BoundaryFlush)?;
                sh.counters.add_logical(Category::BoundaryFlush, b as u64);
            }
            sh.meters.cache.sub(seeded);
            self.release_alltoallv(seeded);
        }
        self.superstep_end("alltoallv")
    }

    /// Network phase: chunks of α destination threads per remote rank, one
    /// exchange per chunk and round.
    fn exchange_remote(&mut self, spec: &MsgSpec) -> Result<()> {
        let sh = self.sh;
        let (p, rank, n, k) = (sh.cfg.p, sh.cfg.rank, sh.n, sh.cfg.k);
        let alpha = sh.cfg.alpha.max(1);
        let round = self.t / k;
        let members = k.min(n - round * k);
        let member = self.t - round * k;
        for c in (0..n).step_by(alpha) {
            let hi = (c + alpha).min(n);
            let mut mine: Vec<Vec<u8>> = vec![Vec::new(); p];
            let mut payload = 0;
            for (q, out) in mine.iter_mut().enumerate() {
                if q == rank {
                    continue;
                }
                for jl in c..hi {
                    let j = jl * p + q;
                    let msg = spec.send[j];
                    let data = self.load_message(msg)?;
                    payload += data.len();
                    out.reserve(FRAME_HEADER + data.len());
                    encode_frame(out, self.rho, j, &data);
                    sh.counters.add_remote(1);
                }
            }
            sh.meters.assembly.add(payload);
            self.charge_alltoallv(payload)?;
            {
                let mut outgoing = sh.exchange.outgoing.lock();
                for (q, bytes) in mine.into_iter().enumerate() {
                    outgoing[q].extend_from_slice(&bytes);
                }
            }
            self.jitter();
            sh.sched.round_sync(self.t, &mut || {
                let out: Vec<Vec<u8>> = std::mem::replace(&mut *sh.exchange.outgoing.lock(), vec![Vec::new(); p]);
                let incoming = sh.net.lock().alltoall(out)?;
                let mut frames: Vec<Frame> = Vec::new();
                for (q, bytes) in incoming.iter().enumerate() {
                    if q == rank {
                        continue;
                    }
                    let fs = decode_frames(bytes)
                        .ok_or_else(|| Error::Protocol(format!("malformed message frames from rank {q}")))?;
                    frames.extend(fs);
                }
                let mut buckets = sh.exchange.buckets.lock();
                for (i, f) in frames.into_iter().enumerate() {
                    buckets[i % members].push(f);
                }
                Ok(())
            })?;
            sh.meters.assembly.sub(payload);
            self.release_alltoallv(payload);
            let frames = std::mem::take(&mut sh.exchange.buckets.lock()[member]);
            for mut f in frames {
                if f.dst % p != rank || f.dst >= sh.cfg.v {
                    return Err(Error::Protocol(format!("frame for VP {} arrived at rank {rank}", f.dst)));
                }
                let (tj, dest) = self.receive_region(f.src, f.dst, f.payload.len())?;
                self.deliver_bytes(&mut f.payload, 0, tj, dest)?;
            }
        }
        Ok(())
    }
}
