//! Cache for destination blocks that messages only partly cover.
//!
//! Before a receiver swaps out it seeds the cache with its boundary blocks, so
//! bytes outside the messages keep their values. Senders patch message bytes
//! into the cached blocks and the receiver writes each block once at the end.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use embsp_core::block::partial_blocks;
use embsp_core::Region;
use parking_lot::Mutex;

use crate::error::{Error, Result};

pub(crate) struct BoundaryCache {
    b: usize,
    per_vp: Vec<Mutex<BTreeMap<usize, Vec<u8>>>>,
    bytes: AtomicUsize,
}

impl BoundaryCache {
    pub fn new(n: usize, b: usize) -> Self {
        BoundaryCache { b, per_vp: (0..n).map(|_| Mutex::new(BTreeMap::new())).collect(), bytes: AtomicUsize::new(0) }
    }

    /// Seeds receiver `t`'s boundary blocks of `recv` from its resident context.
    /// Returns the number of bytes added.
    pub fn seed(&self, t: usize, recv: &[Region], ctx: &[u8]) -> usize {
        let mut map = self.per_vp[t].lock();
        let mut added = 0;
        for r in recv.iter().filter(|r| !r.is_empty()) {
            for blk in partial_blocks(*r, self.b) {
                map.entry(blk).or_insert_with(|| {
                    added += self.b;
                    ctx[blk * self.b..(blk + 1) * self.b].to_vec()
                });
            }
        }
        self.bytes.fetch_add(added, Ordering::SeqCst);
        added
    }

    /// Copies the part of message `(dest, data)` that falls into block `blk`.
    pub fn patch(&self, t: usize, dest: Region, data: &[u8], blk: usize) -> Result<()> {
        let lo = dest.offset.max(blk * self.b);
        let hi = dest.end().min((blk + 1) * self.b);
        let mut map = self.per_vp[t].lock();
        let block = map
            .get_mut(&blk)
            .ok_or_else(|| Error::Protocol(format!("boundary block {blk} of local thread {t} was not seeded")))?;
        block[lo - blk * self.b..hi - blk * self.b].copy_from_slice(&data[lo - dest.offset..hi - dest.offset]);
        Ok(())
    }

    /// Removes and returns receiver `t`'s blocks in block order.
    pub fn drain(&self, t: usize) -> Vec<(usize, Vec<u8>)> {
        let blocks: Vec<(usize, Vec<u8>)> = std::mem::take(&mut *self.per_vp[t].lock()).into_iter().collect();
        self.bytes.fetch_sub(blocks.len() * self.b, Ordering::SeqCst);
        blocks
    }

    pub fn clear(&self) {
        for m in &self.per_vp {
            m.lock().clear();
        }
        self.bytes.store(0, Ordering::SeqCst);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_messages_share_one_block() {
        let c = BoundaryCache::new(1, 8);
        let ctx: Vec<u8> = (0..32).collect();
        let recv = [Region::new(9, 3), Region::new(13, 2)];
        assert_eq!(c.seed(0, &recv, &ctx), 8);
        c.patch(0, recv[0], &[100, 101, 102], 1).unwrap();
        c.patch(0, recv[1], &[200, 201], 1).unwrap();
        let blocks = c.drain(0);
        assert_eq!(blocks, vec![(1, vec![8, 100, 101, 102, 12, 200, 201, 15])]);
    }
}
