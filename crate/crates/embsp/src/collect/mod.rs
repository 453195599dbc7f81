//! Collective operations.

pub(crate) mod alltoallv;
pub(crate) mod boundary;
mod derived;
mod indirect;
mod rooted;

use std::sync::atomic::{AtomicBool, Ordering};

use embsp_core::Region;
use parking_lot::Mutex;

/// Receive offsets published by the local threads of one all-to-all call.
///
/// Column `t` holds local thread `t`'s receive regions indexed by source VP;
/// `ready[t]` is set once the column is written and `t` has swapped out.
pub(crate) struct OffsetTable {
    cols: Vec<Mutex<Vec<Region>>>,
    ready: Vec<AtomicBool>,
}

impl OffsetTable {
    pub fn new(n: usize, v: usize) -> Self {
        OffsetTable {
            cols: (0..n).map(|_| Mutex::new(vec![Region::default(); v])).collect(),
            ready: (0..n).map(|_| AtomicBool::new(false)).collect(),
        }
    }

    pub fn publish(&self, t: usize, recv: &[Region]) {
        self.cols[t].lock().copy_from_slice(recv);
        self.ready[t].store(true, Ordering::Release);
    }

    pub fn ready(&self, t: usize) -> bool {
        self.ready[t].load(Ordering::Acquire)
    }

    pub fn entry(&self, t: usize, src: usize) -> Region {
        self.cols[t].lock()[src]
    }

    pub fn reset(&self) {
        for r in &self.ready {
            r.store(false, Ordering::Release);
        }
    }
}

/// A message travelling between real processors.
pub(crate) struct Frame {
    pub src: usize,
    pub dst: usize,
    pub payload: Vec<u8>,
}

pub(crate) const FRAME_HEADER: usize = 16;

pub(crate) fn encode_frame(out: &mut Vec<u8>, src: usize, dst: usize, payload: &[u8]) {
    out.extend_from_slice(&(src as u32).to_le_bytes());
    out.extend_from_slice(&(dst as u32).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

pub(crate) fn decode_frames(mut buf: &[u8]) -> Option<Vec<Frame>> {
    let mut out = Vec::new();
    while !buf.is_empty() {
        if buf.len() < FRAME_HEADER {
            return None;
        }
        let src = u32::from_le_bytes(buf[0..4].try_into().ok()?) as usize;
        let dst = u32::from_le_bytes(buf[4..8].try_into().ok()?) as usize;
        let len = u64::from_le_bytes(buf[8..16].try_into().ok()?) as usize;
        let end = FRAME_HEADER.checked_add(len)?;
        if buf.len() < end {
            return None;
        }
        out.push(Frame { src, dst, payload: buf[FRAME_HEADER..end].to_vec() });
        buf = &buf[end..];
    }
    Some(out)
}

/// Staging area for the network phase of the parallel all-to-all.
pub(crate) struct Exchange {
    /// Outgoing bytes per destination rank, filled by the members of a round.
    pub outgoing: Mutex<Vec<Vec<u8>>>,
    /// Received frames, split among the members of the round.
    pub buckets: Mutex<Vec<Vec<Frame>>>,
}

impl Exchange {
    pub fn new(p: usize, k: usize) -> Self {
        Exchange {
            outgoing: Mutex::new(vec![Vec::new(); p]),
            buckets: Mutex::new((0..k).map(|_| Vec::new()).collect()),
        }
    }

    pub fn clear(&self) {
        self.outgoing.lock().iter_mut().for_each(Vec::clear);
        self.buckets.lock().iter_mut().for_each(Vec::clear);
    }
}
