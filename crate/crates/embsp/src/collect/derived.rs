//! Collectives built from the primitive ones.

use embsp_core::{MsgSpec, ReduceOp, Region};

use crate::error::{Error, Result};
use crate::runtime::Vp;

impl Vp<'_> {
    /// Every VP sends `len` bytes to every VP; block `j` of `send` goes to VP `j`
    /// and block `i` of `recv` comes from VP `i`.
    pub fn alltoall(&mut self, send: Region, recv: Region, len: usize) -> Result<()> {
        let v = self.size();
        if send.len < v * len || recv.len < v * len {
            return Err(Error::Usage(format!("alltoall buffers must hold {} bytes", v * len)));
        }
        self.alltoallv(&MsgSpec::uniform(v, send.offset, recv.offset, len, len))
    }

    /// Reduce to VP 0, then broadcast.
    pub fn allreduce(&mut self, send: Region, recv: Region, op: &ReduceOp) -> Result<()> {
        self.reduce(0, send, recv, op)?;
        self.bcast(0, recv)
    }

    /// Gather to VP 0, then broadcast.
    pub fn allgather(&mut self, send: Region, recv: Region) -> Result<()> {
        self.gather(0, send, recv)?;
        self.bcast(0, recv)
    }

    /// Gather with per-source sizes; `recv` (v regions) is read at the root only.
    pub fn gatherv(&mut self, root: usize, send: Region, recv: &[Region]) -> Result<()> {
        let v = self.size();
        let empty = Region::new(0, 0);
        let spec = MsgSpec::new(
            (0..v).map(|j| if j == root { send } else { empty }).collect(),
            if self.rank() == root { recv.to_vec() } else { vec![empty; v] },
        );
        self.alltoallv(&spec)
    }

    /// Root sends `send[j]` to VP `j`; `send` is read at the root only.
    pub fn scatter(&mut self, root: usize, send: &[Region], recv: Region) -> Result<()> {
        let v = self.size();
        let empty = Region::new(0, 0);
        let spec = MsgSpec::new(
            if self.rank() == root { send.to_vec() } else { vec![empty; v] },
            (0..v).map(|i| if i == root { recv } else { empty }).collect(),
        );
        self.alltoallv(&spec)
    }

    /// Every VP receives every VP's `send`, the one from VP `i` at `recv[i]`.
    pub fn allgatherv(&mut self, send: Region, recv: &[Region]) -> Result<()> {
        let v = self.size();
        self.alltoallv(&MsgSpec::new(vec![send; v], recv.to_vec()))
    }
}
