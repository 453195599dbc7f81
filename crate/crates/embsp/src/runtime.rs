//! The per-rank runtime and the virtual-processor handle.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use embsp_core::block::align_up;
use embsp_core::{
    config, AllocTable, CounterSnapshot, ContextLayout, IoCounters, Realloc, Region, SimConfig,
};
use parking_lot::{Mutex, RwLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::Bench;
use crate::collect::boundary::BoundaryCache;
use crate::collect::{Exchange, OffsetTable};
use crate::error::{Error, Result};
use crate::io::{DiskSpec, Driver};
use crate::net::{NetKiller, NetSnapshot, NetStats, Transport};
use crate::raw::{RawBuf, RawSpan};
use crate::sched::signal::CompositeSignal;
use crate::sched::{Admission, Scheduler};

/// Diagnostics switched on per runtime.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Record every swap with its cause.
    pub record_events: bool,
    /// Collect benchmark marks.
    pub bench: bool,
    /// Random delays at synchronisation points, seeded by this value.
    pub jitter: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwapDir {
    In,
    Out,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwapCause {
    Superstep,
    Resume,
    Alltoallv,
    Indirect,
    BcastWait,
    GatherWait,
    Reduce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwapEvent {
    pub phase: u64,
    pub thread: usize,
    pub rho: usize,
    pub dir: SwapDir,
    pub cause: SwapCause,
    pub logical: u64,
}

#[derive(Default)]
pub(crate) struct Meter {
    cur: AtomicUsize,
    high: AtomicUsize,
}

impl Meter {
    pub fn add(&self, n: usize) -> usize {
        let now = self.cur.fetch_add(n, Ordering::SeqCst) + n;
        self.high.fetch_max(now, Ordering::SeqCst);
        now
    }

    pub fn sub(&self, n: usize) {
        self.cur.fetch_sub(n, Ordering::SeqCst);
    }

    pub fn set(&self, n: usize) {
        self.cur.store(n, Ordering::SeqCst);
        self.high.fetch_max(n, Ordering::SeqCst);
    }

    fn high(&self) -> usize {
        self.high.load(Ordering::SeqCst)
    }

    fn reset(&self) {
        self.cur.store(0, Ordering::SeqCst);
        self.high.store(0, Ordering::SeqCst);
    }
}

/// High-water marks of the shared buffers, in bytes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BufferStats {
    /// Boundary-block cache of the all-to-all collectives.
    pub cache: usize,
    /// Outgoing network messages assembled by the parallel all-to-all.
    pub assembly: usize,
    /// Cache and assembly together.
    pub alltoallv: usize,
    pub bcast: usize,
    pub gather: usize,
    pub reduce: usize,
}

#[derive(Default)]
pub(crate) struct Meters {
    pub cache: Meter,
    pub assembly: Meter,
    pub alltoallv: Meter,
    pub bcast: Meter,
    pub gather: Meter,
    pub reduce: Meter,
}

impl Meters {
    fn stats(&self) -> BufferStats {
        BufferStats {
            cache: self.cache.high(),
            assembly: self.assembly.high(),
            alltoallv: self.alltoallv.high(),
            bcast: self.bcast.high(),
            gather: self.gather.high(),
            reduce: self.reduce.high(),
        }
    }

    fn reset(&self) {
        for m in [&self.cache, &self.assembly, &self.alltoallv, &self.bcast, &self.gather, &self.reduce] {
            m.reset();
        }
    }
}

/// Outcome of one run on this rank.
#[derive(Debug)]
pub struct RunReport<T> {
    /// Program results in local-thread order.
    pub results: Vec<T>,
    /// Global ids of the local threads.
    pub rhos: Vec<usize>,
    /// I/O during this run.
    pub counters: CounterSnapshot,
    pub net: NetSnapshot,
    pub buffers: BufferStats,
    pub events: Vec<SwapEvent>,
    pub admissions: Vec<Admission>,
    pub elapsed: Duration,
    pub rank: usize,
    /// Rendered benchmark table, when enabled.
    pub bench: Option<String>,
}

pub(crate) struct Shared {
    pub cfg: SimConfig,
    pub n: usize,
    pub explicit: bool,
    pub layout: ContextLayout,
    pub driver: Driver,
    pub counters: Arc<IoCounters>,
    parts: Vec<RawBuf>,
    pub sched: Scheduler,
    pub sig_root: CompositeSignal,
    pub sig_first: CompositeSignal,
    pub sig_finish: CompositeSignal,
    pub table: OffsetTable,
    pub cache: BoundaryCache,
    pub exchange: Exchange,
    pub area: RwLock<Vec<u8>>,
    pub slots: Vec<Mutex<Option<Vec<u8>>>>,
    pub indirect_lens: Mutex<Vec<usize>>,
    pub indirect_disk: Option<usize>,
    pub net: Mutex<Transport>,
    net_stats: Arc<NetStats>,
    killer: NetKiller,
    pub meters: Meters,
    pub bench: Bench,
    pub events: Mutex<Vec<SwapEvent>>,
    pub opts: RunOptions,
    failure: Mutex<Option<Error>>,
    start: Mutex<Instant>,
}

impl Shared {
    /// Context memory of local thread `t`: its partition, or its mapped home.
    pub fn ctx(&self, t: usize) -> RawSpan {
        if self.explicit {
            let p = &self.parts[t % self.cfg.k];
            RawSpan::new(p.as_ptr(), self.cfg.mu)
        } else {
            let d = self.cfg.d;
            let span = self.driver.mapped(t % d).expect("mapped disk");
            let off = (t / d) * self.cfg.mu;
            assert!(off + self.cfg.mu <= span.len());
            // SAFETY: the offset lies inside the mapping.
            RawSpan::new(unsafe { span.ptr().add(off) }, self.cfg.mu)
        }
    }

    pub fn rho(&self, t: usize) -> usize {
        self.cfg.rho(t)
    }

    pub fn p(&self) -> usize {
        self.cfg.p
    }

    pub fn elapsed(&self) -> f64 {
        self.start.lock().elapsed().as_secs_f64()
    }

    pub fn aborted(&self) -> bool {
        self.sched.is_aborted()
    }

    /// Records the run's failure and wakes every waiting thread.
    pub fn fail(&self, err: Error) {
        {
            let mut f = self.failure.lock();
            let replace = match &*f {
                None => true,
                Some(old) => old.is_secondary() && !err.is_secondary(),
            };
            if replace {
                *f = Some(err);
            }
        }
        self.sched.abort();
        for s in [&self.sig_root, &self.sig_first, &self.sig_finish] {
            s.abort();
        }
        self.killer.kill();
    }

    pub fn record(&self, ev: SwapEvent) {
        if self.opts.record_events {
            self.events.lock().push(ev);
        }
    }

    fn reset(&self) {
        self.sched.reset();
        for s in [&self.sig_root, &self.sig_first, &self.sig_finish] {
            s.reset(self.n);
        }
        self.table.reset();
        self.cache.clear();
        self.exchange.clear();
        self.area.write().clear();
        for s in &self.slots {
            *s.lock() = None;
        }
        self.meters.reset();
        self.events.lock().clear();
        self.bench.reset();
        *self.failure.lock() = None;
        *self.start.lock() = Instant::now();
    }
}

/// One real processor's runtime: its disks, memory partitions and threads.
pub struct Runtime {
    sh: Shared,
}

impl Runtime {
    /// Validates `cfg` and opens the disks; connects to the other ranks when P > 1.
    pub fn new(cfg: SimConfig) -> Result<Self> {
        Self::with_options(cfg, RunOptions::default())
    }

    pub fn with_options(cfg: SimConfig, opts: RunOptions) -> Result<Self> {
        let cfg = config::validate(cfg)?;
        let transport = if cfg.p > 1 {
            Transport::connect(cfg.rank, &cfg.hosts, Duration::from_secs(60))?
        } else {
            Transport::loopback()
        };
        Self::with_transport(cfg, transport, opts)
    }

    /// Uses an already connected transport (see [`Transport::local_cluster`]).
    pub fn with_transport(cfg: SimConfig, transport: Transport, opts: RunOptions) -> Result<Self> {
        let cfg = config::validate(cfg)?;
        if transport.size() != cfg.p || transport.rank() != cfg.rank {
            return Err(Error::Usage(format!(
                "transport is rank {} of {} but the configuration is rank {} of {}",
                transport.rank(),
                transport.size(),
                cfg.rank,
                cfg.p
            )));
        }
        let n = cfg.local_vps();
        let b = cfg.block_size;
        let layout = ContextLayout::new(cfg.layout, cfg.d, cfg.mu, b);
        let path_for = |disk: usize, name: String| -> Option<PathBuf> {
            cfg.driver.uses_files().then(|| PathBuf::from(&cfg.disk_paths[disk]).join(name))
        };
        let mut disks: Vec<DiskSpec> = (0..cfg.d)
            .map(|d| DiskSpec { path: path_for(d, format!("embsp.{}.{}", cfg.rank, d)), len: layout.file_len(d, n) })
            .collect();
        let indirect_disk = cfg.indirect_omega.map(|w| {
            let slot = align_up(w, b) as u64;
            disks.push(DiskSpec { path: path_for(0, format!("indirect.{}", cfg.rank)), len: (cfg.v * cfg.v) as u64 * slot });
            cfg.d
        });
        let counters = Arc::new(IoCounters::new());
        let driver = Driver::open(cfg.driver, b, disks, cfg.k, cfg.queue_depth, Arc::clone(&counters))?;
        let explicit = cfg.driver.is_explicit();
        let parts = if explicit { (0..cfg.k).map(|_| RawBuf::zeroed(cfg.mu)).collect() } else { Vec::new() };
        let net_stats = transport.stats();
        let killer = transport.killer();
        let sh = Shared {
            n,
            explicit,
            layout,
            driver,
            counters,
            parts,
            sched: Scheduler::new(n, cfg.k),
            sig_root: CompositeSignal::new(n),
            sig_first: CompositeSignal::new(n),
            sig_finish: CompositeSignal::new(n),
            table: OffsetTable::new(n, cfg.v),
            cache: BoundaryCache::new(n, b),
            exchange: Exchange::new(cfg.p, cfg.k),
            area: RwLock::new(Vec::new()),
            slots: (0..cfg.k).map(|_| Mutex::new(None)).collect(),
            indirect_lens: Mutex::new(if indirect_disk.is_some() { vec![0; cfg.v * cfg.v] } else { Vec::new() }),
            indirect_disk,
            net: Mutex::new(transport),
            net_stats,
            killer,
            meters: Meters::default(),
            bench: Bench::new(n, opts.bench),
            events: Mutex::new(Vec::new()),
            opts,
            failure: Mutex::new(None),
            start: Mutex::new(Instant::now()),
            cfg,
        };
        Ok(Runtime { sh })
    }

    pub fn config(&self) -> &SimConfig {
        &self.sh.cfg
    }

    /// Cumulative I/O counters since the runtime was opened.
    pub fn counters(&self) -> CounterSnapshot {
        self.sh.counters.snapshot()
    }

    pub fn backing_files(&self) -> Vec<(PathBuf, u64)> {
        self.sh.driver.backing_files()
    }

    /// Runs `program` on every local virtual processor and waits for all of them.
    pub fn run<T, F>(&self, program: F) -> Result<RunReport<T>>
    where
        T: Send,
        F: Fn(&mut Vp<'_>) -> Result<T> + Sync,
    {
        let sh = &self.sh;
        sh.reset();
        let c0 = sh.counters.snapshot();
        let n0 = sh.net_stats.snapshot();
        let started = Instant::now();
        let outcomes: Vec<Option<T>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..sh.n)
                .map(|t| {
                    let program = &program;
                    std::thread::Builder::new()
                        .name(format!("vp-{}", sh.rho(t)))
                        .spawn_scoped(scope, move || {
                            let res = catch_unwind(AssertUnwindSafe(|| vp_main(sh, t, program)));
                            match res {
                                Ok(Ok(x)) => Some(x),
                                Ok(Err(e)) => {
                                    sh.fail(e);
                                    None
                                }
                                Err(panic) => {
                                    let message = panic
                                        .downcast_ref::<&str>()
                                        .map(|s| s.to_string())
                                        .or_else(|| panic.downcast_ref::<String>().cloned())
                                        .unwrap_or_else(|| "unknown panic".into());
                                    sh.fail(Error::VpPanic { rho: sh.rho(t), message });
                                    None
                                }
                            }
                        })
                        .expect("spawning a virtual processor thread")
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap_or(None)).collect()
        });
        if let Some(err) = sh.failure.lock().take() {
            return Err(err);
        }
        let results: Vec<T> = outcomes.into_iter().map(|o| o.expect("every thread finished")).collect();
        Ok(RunReport {
            results,
            rhos: (0..sh.n).map(|t| sh.rho(t)).collect(),
            counters: sh.counters.snapshot() - c0,
            net: sh.net_stats.snapshot() - n0,
            buffers: sh.meters.stats(),
            events: std::mem::take(&mut *sh.events.lock()),
            admissions: sh.sched.admissions(),
            elapsed: started.elapsed(),
            rank: sh.cfg.rank,
            bench: sh.opts.bench.then(|| sh.bench.render()),
        })
    }
}

fn vp_main<T>(sh: &Shared, t: usize, program: &(dyn Fn(&mut Vp<'_>) -> Result<T> + Sync)) -> Result<T> {
    let mut vp = Vp::new(sh, t);
    sh.sched.acquire(t)?;
    vp.start_fresh();
    let out = program(&mut vp)?;
    vp.finish()?;
    Ok(out)
}

/// A virtual processor: its context, allocator and collective operations.
///
/// The context is resident whenever user code runs, so the accessors below
/// hand out plain slices.
pub struct Vp<'a> {
    pub(crate) sh: &'a Shared,
    pub(crate) t: usize,
    pub(crate) rho: usize,
    pub(crate) q: usize,
    pub(crate) alloc: AllocTable,
    pub(crate) resident: bool,
    jitter: Option<ChaCha8Rng>,
}

impl<'a> Vp<'a> {
    fn new(sh: &'a Shared, t: usize) -> Self {
        let rho = sh.rho(t);
        Vp {
            sh,
            t,
            rho,
            q: t % sh.cfg.k,
            alloc: AllocTable::new(sh.cfg.mu),
            resident: false,
            jitter: sh.opts.jitter.map(|s| ChaCha8Rng::seed_from_u64(s ^ (rho as u64).wrapping_mul(0x9E37_79B9))),
        }
    }

    /// First admission: the context starts zeroed, with no I/O.
    fn start_fresh(&mut self) {
        let span = self.sh.ctx(self.t);
        // SAFETY: this thread owns its partition (or mapped home) now.
        unsafe { span.slice_mut(0, span.len()).fill(0) };
        self.resident = true;
    }

    fn finish(&mut self) -> Result<()> {
        self.jitter();
        self.sh.driver.wait(self.q)?;
        let sh = self.sh;
        self.resident = false;
        sh.sched.end_phase(self.t, self.rho, "finalize", false, true, &mut || {
            if sh.p() > 1 {
                sh.net.lock().barrier()?;
            }
            Ok(())
        })
    }

    /// Global id ρ.
    pub fn rank(&self) -> usize {
        self.rho
    }

    /// v, the number of virtual processors.
    pub fn size(&self) -> usize {
        self.sh.cfg.v
    }

    /// Index among this rank's threads.
    pub fn local_index(&self) -> usize {
        self.t
    }

    pub fn config(&self) -> &SimConfig {
        &self.sh.cfg
    }

    pub fn mu(&self) -> usize {
        self.sh.cfg.mu
    }

    /// Seconds since the run started.
    pub fn wtime(&self) -> f64 {
        self.sh.elapsed()
    }

    /// Ends the whole run with a user error.
    pub fn abort(&self, code: i32) -> Error {
        Error::UserAbort { rho: self.rho, code }
    }

    /// Counters of this rank so far.
    pub fn counters(&self) -> CounterSnapshot {
        self.sh.counters.snapshot()
    }

    /// Records a benchmark mark for this thread.
    pub fn mark(&self, label: &str) {
        self.sh.bench.mark(self.t, label, self.sh.elapsed());
    }

    /// Allocates `size` bytes of the context, 8-byte aligned.
    pub fn alloc(&mut self, size: usize) -> Result<Region> {
        let off = self.alloc.alloc_aligned(size, 8)?;
        Ok(Region::new(off, size))
    }

    /// Allocates room for `count` values of `T`.
    pub fn alloc_array<T: bytemuck::Pod>(&mut self, count: usize) -> Result<Region> {
        assert!(std::mem::align_of::<T>() <= 8, "element alignment above 8 bytes");
        self.alloc(count * std::mem::size_of::<T>())
    }

    pub fn free(&mut self, r: Region) -> Result<()> {
        self.alloc.free(r.offset)?;
        Ok(())
    }

    /// Resizes an allocation, moving its contents if needed.
    pub fn realloc(&mut self, r: Region, size: usize) -> Result<Region> {
        match self.alloc.realloc(r.offset, size)? {
            Realloc::InPlace(off) => Ok(Region::new(off, size)),
            Realloc::Moved { from, to, keep } => {
                self.context_mut().copy_within(from..from + keep, to);
                Ok(Region::new(to, size))
            }
        }
    }

    pub fn allocated_bytes(&self) -> usize {
        self.alloc.allocated_bytes()
    }

    fn context(&self) -> &[u8] {
        assert!(self.resident, "context accessed while swapped out");
        // SAFETY: resident contexts are only touched by their own thread.
        unsafe { self.sh.ctx(self.t).slice(0, self.sh.cfg.mu) }
    }

    fn context_mut(&mut self) -> &mut [u8] {
        assert!(self.resident, "context accessed while swapped out");
        // SAFETY: as above; `&mut self` makes the borrow unique.
        unsafe { self.sh.ctx(self.t).slice_mut(0, self.sh.cfg.mu) }
    }

    pub fn bytes(&self, r: Region) -> &[u8] {
        &self.context()[r.offset..r.end()]
    }

    pub fn bytes_mut(&mut self, r: Region) -> &mut [u8] {
        &mut self.context_mut()[r.offset..r.end()]
    }

    pub fn slice<T: bytemuck::Pod>(&self, r: Region) -> &[T] {
        bytemuck::cast_slice(self.bytes(r))
    }

    pub fn slice_mut<T: bytemuck::Pod>(&mut self, r: Region) -> &mut [T] {
        bytemuck::cast_slice_mut(self.bytes_mut(r))
    }

    /// Views two disjoint regions at once, the second mutably.
    pub fn split<T: bytemuck::Pod>(&mut self, src: Region, dst: Region) -> (&[T], &mut [T]) {
        assert!(!src.overlaps(&dst), "split regions overlap");
        let ctx = self.context_mut();
        assert!(src.end() <= ctx.len() && dst.end() <= ctx.len());
        let base = ctx.as_mut_ptr();
        // SAFETY: both ranges lie in the context and do not overlap.
        let (a, b) = unsafe {
            (
                std::slice::from_raw_parts(base.add(src.offset), src.len),
                std::slice::from_raw_parts_mut(base.add(dst.offset), dst.len),
            )
        };
        (bytemuck::cast_slice(a), bytemuck::cast_slice_mut(b))
    }

    /// Random delay used by stress tests to perturb interleavings.
    pub(crate) fn jitter(&mut self) {
        if let Some(rng) = &mut self.jitter {
            match rng.gen_range(0..4) {
                0 => {}
                1 => std::thread::yield_now(),
                _ => std::thread::sleep(Duration::from_micros(rng.gen_range(0..200))),
            }
        }
    }

    pub(crate) fn explicit(&self) -> bool {
        self.sh.explicit
    }

    /// Ends a virtual superstep: swap out if resident, meet every VP, swap back in.
    pub(crate) fn superstep_end(&mut self, tag: &'static str) -> Result<()> {
        self.superstep_end_with(tag, &mut || Ok(()))
    }

    pub(crate) fn superstep_end_with(&mut self, tag: &'static str, leader: &mut dyn FnMut() -> Result<()>) -> Result<()> {
        self.jitter();
        let sh = self.sh;
        let retain = sh.cfg.keep_last_resident
            && self.explicit()
            && self.resident
            && sh.sched.last_in_partition(self.t);
        if self.explicit() && self.resident && !retain {
            self.swap_out(&[], SwapCause::Superstep)?;
        }
        sh.driver.wait(self.q)?;
        sh.sched.end_phase(self.t, self.rho, tag, retain, false, &mut || {
            leader()?;
            if sh.p() > 1 {
                sh.net.lock().barrier()?;
            }
            Ok(())
        })?;
        if self.explicit() && !retain {
            self.swap_in(SwapCause::Resume)?;
        }
        self.resident = true;
        Ok(())
    }

    /// Ends an internal step of a collective; nothing is swapped.
    pub(crate) fn step_end(&mut self, tag: &'static str, leader: &mut dyn FnMut() -> Result<()>) -> Result<()> {
        self.jitter();
        self.sh.driver.wait(self.q)?;
        self.sh.sched.end_phase(self.t, self.rho, tag, false, false, leader)
    }

    /// Public barrier.
    pub fn barrier(&mut self) -> Result<()> {
        self.superstep_end("barrier")
    }
}
