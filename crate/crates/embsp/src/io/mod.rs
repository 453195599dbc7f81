//! Disk drivers.
//!
//! Every driver exposes the same block interface over a fixed set of disks:
//! `unix` issues positional reads and writes, `async` hands copies of the data
//! to a worker pool with one bounded queue per memory partition, `mmap` maps the
//! backing files and copies bytes, and `mem` keeps each disk in RAM while
//! enforcing the same alignment rules as the file drivers. Physical traffic is
//! recorded per category on the shared counters.

mod files;
mod queue;

use std::path::PathBuf;
use std::sync::Arc;

use embsp_core::{Category, DiskRegion, DriverKind, IoCounters};
use memmap2::{MmapMut, MmapOptions};

use crate::error::{Error, Result};
use crate::raw::{RawBuf, RawSpan};
use files::{create_preallocated, FileSet};
use queue::{AsyncEngine, Slot};

/// One disk to open: a file path (file drivers) and its size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiskSpec {
    pub path: Option<PathBuf>,
    pub len: u64,
}

/// Handle to an issued write.
pub struct Completion(Option<Arc<Slot>>);

impl Completion {
    fn done() -> Self {
        Completion(None)
    }

    pub fn is_complete(&self) -> bool {
        self.0.as_ref().is_none_or(|s| s.is_done())
    }

    pub fn wait(self) -> Result<()> {
        match self.0 {
            None => Ok(()),
            Some(s) => s.wait().map(|_| ()).map_err(|e| Error::io("asynchronous write", e)),
        }
    }
}

enum MemOwner {
    Heap(#[allow(dead_code)] RawBuf),
    Map(#[allow(dead_code)] MmapMut),
    Empty,
}

struct MemDisk {
    span: RawSpan,
    _owner: MemOwner,
}

enum Backend {
    Sync(FileSet),
    Async(AsyncEngine),
    Memory(Vec<MemDisk>),
}

pub struct Driver {
    kind: DriverKind,
    block: usize,
    counters: Arc<IoCounters>,
    backend: Backend,
    disks: Vec<DiskSpec>,
    remove_files: bool,
}

impl Driver {
    /// Opens `disks`, creating and preallocating backing files for the file drivers.
    pub fn open(
        kind: DriverKind,
        block: usize,
        disks: Vec<DiskSpec>,
        queues: usize,
        depth: usize,
        counters: Arc<IoCounters>,
    ) -> Result<Self> {
        let backend = match kind {
            DriverKind::Mem => Backend::Memory(
                disks
                    .iter()
                    .map(|d| {
                        let buf = RawBuf::zeroed(d.len as usize);
                        MemDisk { span: RawSpan::new(buf.as_ptr(), buf.len()), _owner: MemOwner::Heap(buf) }
                    })
                    .collect(),
            ),
            _ => {
                let mut opened = Vec::with_capacity(disks.len());
                for d in &disks {
                    let path = d.path.as_ref().ok_or_else(|| {
                        Error::Usage(format!("the {} driver needs a backing path for every disk", kind.name()))
                    })?;
                    opened.push(create_preallocated(path, d.len)?);
                }
                match kind {
                    DriverKind::Mmap => {
                        let mut maps = Vec::with_capacity(opened.len());
                        for (file, d) in opened.iter().zip(&disks) {
                            if d.len == 0 {
                                maps.push(MemDisk { span: RawSpan::new(std::ptr::null_mut(), 0), _owner: MemOwner::Empty });
                                continue;
                            }
                            // SAFETY: the file was just created by us and is not resized while mapped.
                            let mut map = unsafe { MmapOptions::new().len(d.len as usize).map_mut(file) }
                                .map_err(|e| Error::io("mapping backing file", e))?;
                            let span = RawSpan::new(map.as_mut_ptr(), map.len());
                            maps.push(MemDisk { span, _owner: MemOwner::Map(map) });
                        }
                        Backend::Memory(maps)
                    }
                    DriverKind::Async => {
                        Backend::Async(AsyncEngine::new(FileSet::new(opened.into_iter().map(Some).collect()), queues, depth))
                    }
                    _ => Backend::Sync(FileSet::new(opened.into_iter().map(Some).collect())),
                }
            }
        };
        Ok(Driver { kind, block, counters, backend, disks, remove_files: true })
    }

    pub fn kind(&self) -> DriverKind {
        self.kind
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn counters(&self) -> &Arc<IoCounters> {
        &self.counters
    }

    /// Backing files and their sizes.
    pub fn backing_files(&self) -> Vec<(PathBuf, u64)> {
        self.disks.iter().filter_map(|d| d.path.clone().map(|p| (p, d.len))).collect()
    }

    /// Keep backing files on disk after the driver is dropped.
    pub fn keep_files(&mut self) {
        self.remove_files = false;
    }

    fn check(&self, r: DiskRegion, len: usize) -> Result<()> {
        let limit = self.disks.get(r.disk).map(|d| d.len).ok_or(Error::RangeOverflow {
            offset: r.offset,
            len: r.len,
            limit: 0,
        })?;
        if r.offset + r.len > limit {
            return Err(Error::RangeOverflow { offset: r.offset, len: r.len, limit });
        }
        if r.len != len as u64 {
            return Err(Error::Protocol(format!("buffer of {len} bytes for a {}-byte disk request", r.len)));
        }
        if self.kind.is_explicit() && !r.is_aligned(self.block) {
            return Err(Error::Alignment {
                driver: self.kind.name(),
                disk: r.disk,
                offset: r.offset,
                len: r.len,
                block: self.block,
            });
        }
        Ok(())
    }

    /// Writes `data` to `r` on behalf of queue `q`.
    pub fn write(&self, q: usize, r: DiskRegion, data: &[u8], cat: Category) -> Result<Completion> {
        self.check(r, data.len())?;
        if data.is_empty() {
            return Ok(Completion::done());
        }
        let done = match &self.backend {
            Backend::Sync(fs) => {
                fs.write_at(r.disk, r.offset, data).map_err(|e| Error::io("disk write", e))?;
                Completion::done()
            }
            Backend::Async(eng) => Completion(Some(
                eng.write(q, r.disk, r.offset, data.to_vec()).map_err(|e| Error::io("asynchronous write", e))?,
            )),
            Backend::Memory(disks) => {
                // SAFETY: the runtime protocol gives each in-flight region a single writer.
                unsafe { disks[r.disk].span.write(r.offset as usize, data) };
                Completion::done()
            }
        };
        self.counters.record_write(cat, data.len() as u64);
        Ok(done)
    }

    /// Reads `r` into `buf`, waiting for queue `q`'s outstanding writes first.
    pub fn read(&self, q: usize, r: DiskRegion, buf: &mut [u8], cat: Category) -> Result<()> {
        self.check(r, buf.len())?;
        if buf.is_empty() {
            return Ok(());
        }
        match &self.backend {
            Backend::Sync(fs) => fs.read_at(r.disk, r.offset, buf).map_err(|e| Error::io("disk read", e))?,
            Backend::Async(eng) => eng.read(q, r.disk, r.offset, buf).map_err(|e| Error::io("asynchronous read", e))?,
            // SAFETY: as for writes.
            Backend::Memory(disks) => unsafe { disks[r.disk].span.read(r.offset as usize, buf) },
        }
        self.counters.record_read(cat, buf.len() as u64);
        Ok(())
    }

    pub fn read_vec(&self, q: usize, r: DiskRegion, cat: Category) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; r.len as usize];
        self.read(q, r, &mut buf, cat)?;
        Ok(buf)
    }

    /// Blocks until every write issued on queue `q` has completed.
    pub fn wait(&self, q: usize) -> Result<()> {
        match &self.backend {
            Backend::Async(eng) => eng.wait(q).map_err(|e| Error::io("asynchronous write", e)),
            _ => Ok(()),
        }
    }

    /// Requests on queue `q` that have not completed yet.
    pub fn pending(&self, q: usize) -> usize {
        match &self.backend {
            Backend::Async(eng) => eng.pending(q),
            _ => 0,
        }
    }

    /// Direct view of disk `disk` for the memory-mapped driver.
    pub(crate) fn mapped(&self, disk: usize) -> Option<RawSpan> {
        match (&self.backend, self.kind) {
            (Backend::Memory(disks), DriverKind::Mmap) => disks.get(disk).map(|d| d.span),
            _ => None,
        }
    }

    /// Flushes file data to stable storage.
    pub fn sync_all(&self) -> Result<()> {
        let fs = match &self.backend {
            Backend::Sync(fs) => fs,
            Backend::Async(eng) => eng.files(),
            Backend::Memory(_) => return Ok(()),
        };
        for (i, _) in self.disks.iter().enumerate() {
            fs.file(i).sync_all().map_err(|e| Error::io("syncing backing file", e))?;
        }
        Ok(())
    }
}

impl Drop for Driver {
    fn drop(&mut self) {
        if self.remove_files && self.kind.uses_files() {
            for d in &self.disks {
                if let Some(p) = &d.path {
                    let _ = std::fs::remove_file(p);
                }
            }
        }
    }
}
