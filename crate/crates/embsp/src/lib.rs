//! External-memory BSP runtime: v virtual processors over P real processors,
//! with contexts swapped between RAM and disk and collectives that deliver
//! straight into the receivers' disk contexts.

pub mod api;
pub mod apps;
pub mod bench;
pub mod cli;
pub mod collect;
pub mod error;
pub mod io;
pub mod net;
mod raw;
pub mod runtime;
pub mod sched;
mod vmem;

pub use embsp_core::*;
pub use error::{Error, Result};
pub use runtime::{BufferStats, RunOptions, RunReport, Runtime, SwapCause, SwapDir, SwapEvent, Vp};
