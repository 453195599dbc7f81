//! Message-passing facade with MPI names over the runtime.
//!
//! Buffers are regions of the calling VP's context; counts and displacements
//! are in bytes, relative to the buffer they describe.
//!
//! ```no_run
//! use embsp::api::{Mpi, Op};
//! use embsp::{BuiltinOp, Datatype, SimConfig};
//!
//! let mut cfg = SimConfig::new(1, 4, 2, 1 << 16);
//! cfg.driver = embsp::DriverKind::Mem;
//! let mut mpi = Mpi::new(cfg);
//! mpi.init().unwrap();
//! let sums = mpi
//!     .run(|c| {
//!         let x = c.malloc(8)?;
//!         let y = c.malloc(8)?;
//!         c.slice_mut::<u64>(x)[0] = c.comm_rank() as u64;
//!         c.allreduce(x, y, Op::Builtin(Datatype::U64, BuiltinOp::Sum))?;
//!         Ok(c.slice::<u64>(y)[0])
//!     })
//!     .unwrap();
//! assert_eq!(sums, vec![6; 4]);
//! mpi.finalize().unwrap();
//! ```

use std::time::Instant;

use embsp_core::{BuiltinOp, Datatype, MsgSpec, ReduceOp, Region, SimConfig};

use crate::error::{Error, Result};
use crate::runtime::{RunOptions, RunReport, Runtime, Vp};

/// A reduction operator: built in, or registered with [`Mpi::op_create`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Builtin(Datatype, BuiltinOp),
    User(usize),
}

/// One real processor's view of the world communicator.
pub struct Mpi {
    cfg: SimConfig,
    opts: RunOptions,
    rt: Option<Runtime>,
    ops: Vec<ReduceOp>,
    started: Instant,
}

impl Mpi {
    pub fn new(cfg: SimConfig) -> Self {
        Self::with_options(cfg, RunOptions::default())
    }

    pub fn with_options(cfg: SimConfig, opts: RunOptions) -> Self {
        Mpi { cfg, opts, rt: None, ops: Vec::new(), started: Instant::now() }
    }

    /// Opens the disks and connects to the other ranks.
    pub fn init(&mut self) -> Result<()> {
        if self.rt.is_some() {
            return Err(Error::Usage("init called twice".into()));
        }
        self.rt = Some(Runtime::with_options(self.cfg.clone(), self.opts.clone())?);
        self.started = Instant::now();
        Ok(())
    }

    /// Registers a commutative operator for later reductions.
    pub fn op_create(&mut self, op: ReduceOp) -> Op {
        self.ops.push(op);
        Op::User(self.ops.len() - 1)
    }

    pub fn runtime(&self) -> Result<&Runtime> {
        self.rt.as_ref().ok_or(Error::NotInitialized)
    }

    /// Runs `program` on every local VP; results are in local-thread order.
    pub fn run<T, F>(&self, program: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut Comm<'_, '_>) -> Result<T> + Sync,
    {
        Ok(self.run_report(program)?.results)
    }

    pub fn run_report<T, F>(&self, program: F) -> Result<RunReport<T>>
    where
        T: Send,
        F: Fn(&mut Comm<'_, '_>) -> Result<T> + Sync,
    {
        let rt = self.runtime()?;
        let (ops, started) = (&self.ops, self.started);
        rt.run(|vp| program(&mut Comm { vp, ops, started }))
    }

    /// Closes the disks and removes the backing files.
    pub fn finalize(&mut self) -> Result<()> {
        self.rt.take().map(drop).ok_or(Error::NotInitialized)
    }
}

/// The calls available to a VP program.
pub struct Comm<'v, 'a> {
    vp: &'v mut Vp<'a>,
    ops: &'v [ReduceOp],
    started: Instant,
}

impl<'a> Comm<'_, 'a> {
    /// The underlying virtual processor.
    pub fn vp(&mut self) -> &mut Vp<'a> {
        self.vp
    }

    /// ρ, this VP's global id.
    pub fn comm_rank(&self) -> usize {
        self.vp.rank()
    }

    /// v, the number of virtual processors.
    pub fn comm_size(&self) -> usize {
        self.vp.size()
    }

    /// Seconds since `init`.
    pub fn wtime(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn abort(&self, code: i32) -> Error {
        self.vp.abort(code)
    }

    pub fn comm_split(&mut self, _color: i32, _key: i32) -> Result<()> {
        Err(Error::NotImplemented("MPI_Comm_split"))
    }

    pub fn send(&mut self, _buf: Region, _dest: usize) -> Result<()> {
        Err(Error::NotImplemented("MPI_Send"))
    }

    pub fn recv(&mut self, _buf: Region, _src: usize) -> Result<()> {
        Err(Error::NotImplemented("MPI_Recv"))
    }

    pub fn malloc(&mut self, size: usize) -> Result<Region> {
        self.vp.alloc(size)
    }

    pub fn realloc(&mut self, r: Region, size: usize) -> Result<Region> {
        self.vp.realloc(r, size)
    }

    pub fn free(&mut self, r: Region) -> Result<()> {
        self.vp.free(r)
    }

    pub fn bytes(&self, r: Region) -> &[u8] {
        self.vp.bytes(r)
    }

    pub fn bytes_mut(&mut self, r: Region) -> &mut [u8] {
        self.vp.bytes_mut(r)
    }

    pub fn slice<T: bytemuck::Pod>(&self, r: Region) -> &[T] {
        self.vp.slice(r)
    }

    pub fn slice_mut<T: bytemuck::Pod>(&mut self, r: Region) -> &mut [T] {
        self.vp.slice_mut(r)
    }

    pub fn barrier(&mut self) -> Result<()> {
        self.vp.barrier()
    }

    pub fn bcast(&mut self, buf: Region, root: usize) -> Result<()> {
        self.vp.bcast(root, buf)
    }

    pub fn gather(&mut self, send: Region, recv: Region, root: usize) -> Result<()> {
        self.vp.gather(root, send, recv)
    }

    pub fn gatherv(&mut self, send: Region, recv: Region, counts: &[usize], displs: &[usize], root: usize) -> Result<()> {
        let regions = self.regions(recv, counts, displs, self.vp.rank() == root)?;
        self.vp.gatherv(root, send, &regions)
    }

    pub fn scatter(&mut self, send: Region, count: usize, recv: Region, root: usize) -> Result<()> {
        let v = self.comm_size();
        let is_root = self.vp.rank() == root;
        if is_root && send.len < v * count {
            return Err(Error::Usage(format!("scatter send buffer must hold {} bytes", v * count)));
        }
        if recv.len < count {
            return Err(Error::Usage(format!("scatter receive buffer must hold {count} bytes")));
        }
        let parts: Vec<Region> = (0..v).map(|j| Region::new(send.offset + j * count, count)).collect();
        self.vp.scatter(root, &parts, Region::new(recv.offset, count))
    }

    pub fn allgather(&mut self, send: Region, recv: Region) -> Result<()> {
        self.vp.allgather(send, recv)
    }

    pub fn allgatherv(&mut self, send: Region, recv: Region, counts: &[usize], displs: &[usize]) -> Result<()> {
        let regions = self.regions(recv, counts, displs, true)?;
        self.vp.allgatherv(send, &regions)
    }

    pub fn alltoall(&mut self, send: Region, recv: Region, count: usize) -> Result<()> {
        self.vp.alltoall(send, recv, count)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn alltoallv(
        &mut self,
        send: Region,
        send_counts: &[usize],
        send_displs: &[usize],
        recv: Region,
        recv_counts: &[usize],
        recv_displs: &[usize],
    ) -> Result<()> {
        let s = self.regions(send, send_counts, send_displs, true)?;
        let r = self.regions(recv, recv_counts, recv_displs, true)?;
        self.vp.alltoallv(&MsgSpec::new(s, r))
    }

    pub fn reduce(&mut self, send: Region, recv: Region, op: Op, root: usize) -> Result<()> {
        let op = self.op(op)?;
        self.vp.reduce(root, send, recv, &op)
    }

    pub fn allreduce(&mut self, send: Region, recv: Region, op: Op) -> Result<()> {
        let op = self.op(op)?;
        self.vp.allreduce(send, recv, &op)
    }

    fn op(&self, op: Op) -> Result<ReduceOp> {
        match op {
            Op::Builtin(dt, o) => Ok(ReduceOp::builtin(dt, o)),
            Op::User(i) => self.ops.get(i).cloned().ok_or_else(|| Error::Usage(format!("unknown user operator {i}"))),
        }
    }

    /// Turns counts and displacements into regions inside `buf`; all empty when `used` is false.
    fn regions(&self, buf: Region, counts: &[usize], displs: &[usize], used: bool) -> Result<Vec<Region>> {
        let v = self.comm_size();
        if !used {
            return Ok(vec![Region::new(0, 0); v]);
        }
        if counts.len() != v || displs.len() != v {
            return Err(Error::Usage(format!("expected {v} counts and displacements")));
        }
        counts
            .iter()
            .zip(displs)
            .map(|(&c, &d)| {
                if d + c > buf.len {
                    return Err(Error::Usage(format!("displacement {d} + count {c} exceeds a buffer of {} bytes", buf.len)));
                }
                Ok(Region::new(buf.offset + d, c))
            })
            .collect()
    }
}
