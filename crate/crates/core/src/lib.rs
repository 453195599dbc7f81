//! Platform-independent pieces of an external-memory BSP runtime.
//!
//! Everything here is pure data and arithmetic: run-time parameters and their
//! validation, block geometry and on-disk layout, the per-context first-fit
//! allocator, I/O counters, message specifications, reduction operators,
//! sample-sort helpers and the analytical cost model. The `embsp` crate builds
//! the threaded runtime on top of it.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod alloc_table;
pub mod block;
pub mod config;
pub mod costmodel;
pub mod counters;
pub mod msg;
pub mod psrs;
pub mod reduce;

pub use alloc_table::{AllocError, AllocTable, Realloc};
pub use block::{ContextLayout, DiskRegion, Region};
pub use config::{ConfigError, CostParams, DriverKind, Layout, SimConfig, Violation};
pub use counters::{Category, CounterSnapshot, IoCounters};
pub use msg::{MsgError, MsgSpec};
pub use reduce::{BuiltinOp, Datatype, ReduceOp};
