//! Per-call message specifications for the all-to-all collectives.

use alloc::vec::Vec;

use crate::block::Region;

/// Where a VP's outgoing and incoming messages live in its context.
///
/// `send[j]` is the message for global VP `j`; `recv[i]` receives the message from `i`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MsgSpec {
    pub send: Vec<Region>,
    pub recv: Vec<Region>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MsgError {
    #[error("spec lists {got} {side} regions for {v} virtual processors")]
    Arity { side: &'static str, got: usize, v: usize },
    #[error("{side} region {index} ({offset}+{len}) exceeds the context size {mu}")]
    OutOfRange { side: &'static str, index: usize, offset: usize, len: usize, mu: usize },
    #[error("receive regions {a} and {b} overlap")]
    RecvOverlap { a: usize, b: usize },
    #[error("send region {send} overlaps receive region {recv}")]
    SendRecvOverlap { send: usize, recv: usize },
}

impl MsgSpec {
    pub fn new(send: Vec<Region>, recv: Vec<Region>) -> Self {
        MsgSpec { send, recv }
    }

    /// Every pair exchanges `len` bytes; message `j` sits at `send_base + j*stride`,
    /// and the message from `i` lands at `recv_base + i*stride`.
    pub fn uniform(v: usize, send_base: usize, recv_base: usize, len: usize, stride: usize) -> Self {
        MsgSpec {
            send: (0..v).map(|j| Region::new(send_base + j * stride, len)).collect(),
            recv: (0..v).map(|i| Region::new(recv_base + i * stride, len)).collect(),
        }
    }

    /// ω for this call: the largest single message in either direction.
    pub fn omega(&self) -> usize {
        self.send.iter().chain(self.recv.iter()).map(|r| r.len).max().unwrap_or(0)
    }

    pub fn send_total(&self) -> usize {
        self.send.iter().map(|r| r.len).sum()
    }

    pub fn recv_total(&self) -> usize {
        self.recv.iter().map(|r| r.len).sum()
    }

    /// Checks shape and ranges for a world of `v` VPs with μ-byte contexts.
    pub fn validate(&self, v: usize, mu: usize) -> Result<(), MsgError> {
        for (side, list) in [("send", &self.send), ("recv", &self.recv)] {
            if list.len() != v {
                return Err(MsgError::Arity { side, got: list.len(), v });
            }
            for (index, r) in list.iter().enumerate() {
                if !r.within(mu) {
                    return Err(MsgError::OutOfRange { side, index, offset: r.offset, len: r.len, mu });
                }
            }
        }
        let mut order: Vec<usize> = (0..v).filter(|&i| !self.recv[i].is_empty()).collect();
        order.sort_unstable_by_key(|&i| self.recv[i].offset);
        for w in order.windows(2) {
            if self.recv[w[0]].overlaps(&self.recv[w[1]]) {
                return Err(MsgError::RecvOverlap { a: w[0], b: w[1] });
            }
        }
        for (s, sr) in self.send.iter().enumerate() {
            if sr.is_empty() {
                continue;
            }
            let at = order.partition_point(|&i| self.recv[i].end() <= sr.offset);
            if let Some(&r) = order.get(at) {
                if self.recv[r].overlaps(sr) {
                    return Err(MsgError::SendRecvOverlap { send: s, recv: r });
                }
            }
        }
        Ok(())
    }
}
