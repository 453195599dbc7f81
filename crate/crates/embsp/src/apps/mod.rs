//! End-to-end applications: sample sort, prefix sum and an all-to-all benchmark.

pub mod alltoall;
pub mod prefix_sum;
pub mod psrs;

use std::time::Duration;

use embsp_core::CounterSnapshot;

use crate::error::Result;
use crate::net::NetSnapshot;
use crate::runtime::{BufferStats, RunReport, Runtime};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum App {
    Psrs,
    Psum,
    Alltoall,
}

impl App {
    pub fn name(self) -> &'static str {
        match self {
            App::Psrs => "psrs",
            App::Psum => "psum",
            App::Alltoall => "alltoall",
        }
    }
}

/// Outcome of one application run on this rank.
#[derive(Debug)]
pub struct AppRun {
    pub app: App,
    /// Every local VP verified its part of the result.
    pub ok: bool,
    pub elapsed: Duration,
    pub counters: CounterSnapshot,
    pub net: NetSnapshot,
    pub buffers: BufferStats,
    pub bench: Option<String>,
}

fn summarize<T>(app: App, report: RunReport<T>, ok: impl Fn(&T) -> bool) -> AppRun {
    AppRun {
        app,
        ok: report.results.iter().all(ok),
        elapsed: report.elapsed,
        counters: report.counters,
        net: report.net,
        buffers: report.buffers,
        bench: report.bench,
    }
}

/// Runs `app` on `n` generated elements with `seed`.
pub fn run_app(rt: &Runtime, app: App, n: usize, seed: u64) -> Result<AppRun> {
    Ok(match app {
        App::Psrs => {
            let report = rt.run(|vp| psrs::psrs(vp, n, psrs::Keys::Random(seed), false))?;
            summarize(app, report, |r| r.verified)
        }
        App::Psum => {
            let values = prefix_sum::Values::Random(seed);
            let report = rt.run(|vp| prefix_sum::prefix_sum(vp, n, &values, false))?;
            summarize(app, report, |r| r.verified)
        }
        App::Alltoall => {
            let report = rt.run(|vp| alltoall::alltoall_bench(vp, n, seed))?;
            summarize(app, report, |r| r.verified)
        }
    })
}

/// A 64-bit mixer used for generated values and order-independent checksums.
pub(crate) fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
