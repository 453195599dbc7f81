//! I/O accounting.
//!
//! Two views are kept. Logical bytes per category follow the algorithmic
//! accounting (a delivery counts its message length, a strict swap-out counts
//! μ minus the skipped bytes). Physical bytes per category count what actually
//! crossed the driver interface, block rounding and read-modify-write included.

use core::ops::Sub;
use core::sync::atomic::{AtomicU64, Ordering};

/// What a byte transfer was for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Category {
    SwapIn,
    SwapOut,
    DeliveryWrite,
    DeliveryRead,
    BoundaryFlush,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::SwapIn,
        Category::SwapOut,
        Category::DeliveryWrite,
        Category::DeliveryRead,
        Category::BoundaryFlush,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::SwapIn => "swap_in",
            Category::SwapOut => "swap_out",
            Category::DeliveryWrite => "delivery_write",
            Category::DeliveryRead => "delivery_read",
            Category::BoundaryFlush => "boundary_flush",
        }
    }
}

/// Live counters shared by all threads of a real processor.
#[derive(Debug, Default)]
pub struct IoCounters {
    logical: [AtomicU64; 5],
    physical: [AtomicU64; 5],
    read_ops: AtomicU64,
    write_ops: AtomicU64,
    read_bytes: AtomicU64,
    write_bytes: AtomicU64,
    direct_msgs: AtomicU64,
    indirect_msgs: AtomicU64,
    remote_msgs: AtomicU64,
}

impl IoCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_logical(&self, cat: Category, bytes: u64) {
        self.logical[cat.index()].fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn record_read(&self, cat: Category, bytes: u64) {
        self.physical[cat.index()].fetch_add(bytes, Ordering::Relaxed);
        self.read_ops.fetch_add(1, Ordering::Relaxed);
        self.read_bytes.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn record_write(&self, cat: Category, bytes: u64) {
        self.physical[cat.index()].fetch_add(bytes, Ordering::Relaxed);
        self.write_ops.fetch_add(1, Ordering::Relaxed);
        self.write_bytes.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn add_direct(&self, n: u64) {
        self.direct_msgs.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_indirect(&self, n: u64) {
        self.indirect_msgs.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_remote(&self, n: u64) {
        self.remote_msgs.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        let load = |a: &AtomicU64| a.load(Ordering::Relaxed);
        CounterSnapshot {
            logical: self.logical.each_ref().map(load),
            physical: self.physical.each_ref().map(load),
            read_ops: load(&self.read_ops),
            write_ops: load(&self.write_ops),
            read_bytes: load(&self.read_bytes),
            write_bytes: load(&self.write_bytes),
            direct_msgs: load(&self.direct_msgs),
            indirect_msgs: load(&self.indirect_msgs),
            remote_msgs: load(&self.remote_msgs),
        }
    }
}

/// A point-in-time copy of [`IoCounters`]; subtract two to get a delta.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub logical: [u64; 5],
    pub physical: [u64; 5],
    pub read_ops: u64,
    pub write_ops: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
    pub direct_msgs: u64,
    pub indirect_msgs: u64,
    pub remote_msgs: u64,
}

impl CounterSnapshot {
    pub fn get(&self, cat: Category) -> u64 {
        self.logical[cat.index()]
    }

    pub fn physical(&self, cat: Category) -> u64 {
        self.physical[cat.index()]
    }

    pub fn swap_in_bytes(&self) -> u64 {
        self.get(Category::SwapIn)
    }

    pub fn swap_out_bytes(&self) -> u64 {
        self.get(Category::SwapOut)
    }

    pub fn delivery_write_bytes(&self) -> u64 {
        self.get(Category::DeliveryWrite)
    }

    pub fn delivery_read_bytes(&self) -> u64 {
        self.get(Category::DeliveryRead)
    }

    pub fn boundary_flush_bytes(&self) -> u64 {
        self.get(Category::BoundaryFlush)
    }

    /// Sum of all logical categories.
    pub fn total(&self) -> u64 {
        self.logical.iter().sum()
    }

    /// Sum of all physical categories; equals `read_bytes + write_bytes`.
    pub fn physical_total(&self) -> u64 {
        self.physical.iter().sum()
    }
}

impl Sub for CounterSnapshot {
    type Output = CounterSnapshot;

    fn sub(self, rhs: Self) -> Self {
        let mut out = self;
        for i in 0..5 {
            out.logical[i] -= rhs.logical[i];
            out.physical[i] -= rhs.physical[i];
        }
        out.read_ops -= rhs.read_ops;
        out.write_ops -= rhs.write_ops;
        out.read_bytes -= rhs.read_bytes;
        out.write_bytes -= rhs.write_bytes;
        out.direct_msgs -= rhs.direct_msgs;
        out.indirect_msgs -= rhs.indirect_msgs;
        out.remote_msgs -= rhs.remote_msgs;
        out
    }
}

impl core::ops::Add for CounterSnapshot {
    type Output = CounterSnapshot;

    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        for i in 0..5 {
            out.logical[i] += rhs.logical[i];
            out.physical[i] += rhs.physical[i];
        }
        out.read_ops += rhs.read_ops;
        out.write_ops += rhs.write_ops;
        out.read_bytes += rhs.read_bytes;
        out.write_bytes += rhs.write_bytes;
        out.direct_msgs += rhs.direct_msgs;
        out.indirect_msgs += rhs.indirect_msgs;
        out.remote_msgs += rhs.remote_msgs;
        out
    }
}
