//! Worker-pool backend: writes are copied, queued and completed in the background.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crossbeam_channel::{unbounded, Sender};
use parking_lot::{Condvar, Mutex};

use super::files::FileSet;

type Outcome = Result<Vec<u8>, (std::io::ErrorKind, String)>;

/// Completion state of one request.
pub(crate) struct Slot {
    state: Mutex<Option<Outcome>>,
    cv: Condvar,
}

impl Slot {
    fn new() -> Arc<Self> {
        Arc::new(Slot { state: Mutex::new(None), cv: Condvar::new() })
    }

    fn complete(&self, out: Outcome) {
        *self.state.lock() = Some(out);
        self.cv.notify_all();
    }

    pub fn is_done(&self) -> bool {
        self.state.lock().is_some()
    }

    /// Blocks until done; reads hand back their data once.
    pub fn wait(&self) -> std::io::Result<Vec<u8>> {
        let mut g = self.state.lock();
        while g.is_none() {
            self.cv.wait(&mut g);
        }
        match g.as_mut().unwrap() {
            Ok(data) => Ok(std::mem::take(data)),
            Err((kind, msg)) => Err(std::io::Error::new(*kind, msg.clone())),
        }
    }
}

enum Op {
    Write(Vec<u8>),
    Read(usize),
}

struct Job {
    id: u64,
    disk: usize,
    offset: u64,
    op: Op,
    slot: Arc<Slot>,
}

#[derive(Clone, Copy)]
struct Inflight {
    id: u64,
    queue: usize,
    disk: usize,
    start: u64,
    end: u64,
}

pub(crate) struct AsyncEngine {
    files: Arc<FileSet>,
    tx: Option<Sender<Job>>,
    workers: Vec<JoinHandle<()>>,
    queues: Vec<Mutex<VecDeque<Arc<Slot>>>>,
    depth: usize,
    next_id: AtomicU64,
    inflight: Arc<Mutex<Vec<Inflight>>>,
}

impl AsyncEngine {
    pub fn new(files: FileSet, queues: usize, depth: usize) -> Self {
        let files = Arc::new(files);
        let (tx, rx) = unbounded::<Job>();
        let inflight: Arc<Mutex<Vec<Inflight>>> = Arc::new(Mutex::new(Vec::new()));
        let workers = (0..queues.clamp(1, 16))
            .map(|_| {
                let rx = rx.clone();
                let files = Arc::clone(&files);
                let inflight = Arc::clone(&inflight);
                std::thread::spawn(move || {
                    for job in rx {
                        let out = match job.op {
                            Op::Write(data) => files.write_at(job.disk, job.offset, &data).map(|_| Vec::new()),
                            Op::Read(len) => {
                                let mut buf = vec![0u8; len];
                                files.read_at(job.disk, job.offset, &mut buf).map(|_| buf)
                            }
                        };
                        if cfg!(debug_assertions) {
                            inflight.lock().retain(|f| f.id != job.id);
                        }
                        job.slot.complete(out.map_err(|e| (e.kind(), e.to_string())));
                    }
                })
            })
            .collect();
        AsyncEngine {
            files,
            tx: Some(tx),
            workers,
            queues: (0..queues.max(1)).map(|_| Mutex::new(VecDeque::new())).collect(),
            depth: depth.max(1),
            next_id: AtomicU64::new(0),
            inflight,
        }
    }

    fn submit(&self, id: u64, disk: usize, offset: u64, op: Op) -> Arc<Slot> {
        let slot = Slot::new();
        let job = Job { id, disk, offset, op, slot: Arc::clone(&slot) };
        self.tx.as_ref().expect("engine running").send(job).expect("I/O workers alive");
        slot
    }

    /// Queues a write on `queue`, first retiring the oldest request if the queue is full.
    pub fn write(&self, queue: usize, disk: usize, offset: u64, data: Vec<u8>) -> std::io::Result<Arc<Slot>> {
        let mut q = self.queues[queue].lock();
        while q.len() >= self.depth {
            let oldest = q.pop_front().unwrap();
            oldest.wait()?;
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        if cfg!(debug_assertions) {
            let end = offset + data.len() as u64;
            let mut inflight = self.inflight.lock();
            if let Some(f) = inflight
                .iter()
                .find(|f| f.queue != queue && f.disk == disk && f.start < end && offset < f.end)
            {
                panic!(
                    "queues {} and {} have overlapping writes in flight on disk {} ({}..{} vs {}..{})",
                    f.queue, queue, disk, f.start, f.end, offset, end
                );
            }
            inflight.push(Inflight { id, queue, disk, start: offset, end });
        }
        let slot = self.submit(id, disk, offset, Op::Write(data));
        q.push_back(Arc::clone(&slot));
        Ok(slot)
    }

    /// Waits for the queue's writes, then performs the read.
    pub fn read(&self, queue: usize, disk: usize, offset: u64, buf: &mut [u8]) -> std::io::Result<()> {
        self.wait(queue)?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let slot = self.submit(id, disk, offset, Op::Read(buf.len()));
        let data = slot.wait()?;
        buf.copy_from_slice(&data);
        Ok(())
    }

    pub fn wait(&self, queue: usize) -> std::io::Result<()> {
        let mut q = self.queues[queue].lock();
        let mut first_err = None;
        while let Some(s) = q.pop_front() {
            if let Err(e) = s.wait() {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }

    pub fn pending(&self, queue: usize) -> usize {
        self.queues[queue].lock().iter().filter(|s| !s.is_done()).count()
    }

    pub fn files(&self) -> &FileSet {
        &self.files
    }
}

impl Drop for AsyncEngine {
    fn drop(&mut self) {
        self.tx.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
