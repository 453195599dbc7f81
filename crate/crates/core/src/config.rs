//! Simulation and system parameters.
//!
//! A [`SimConfig`] is built once, checked by [`validate`], and then shared
//! read-only by every other part of the runtime.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Default disk block size in bytes.
pub const DEFAULT_BLOCK_SIZE: usize = 4096;
/// Default shared-buffer size in bytes.
pub const DEFAULT_SIGMA: usize = 64 << 20;
/// Default per-queue depth of the async driver.
pub const DEFAULT_QUEUE_DEPTH: usize = 8;

/// How contexts move between RAM and disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DriverKind {
    /// Blocking positional reads and writes.
    Unix,
    /// Requests queued per partition and serviced by worker threads.
    Async,
    /// Backing files mapped into memory; no explicit swapping.
    Mmap,
    /// An in-RAM byte array standing in for the disks.
    Mem,
}

impl DriverKind {
    /// Explicit drivers move whole blocks and swap contexts in and out.
    pub fn is_explicit(self) -> bool {
        !matches!(self, DriverKind::Mmap)
    }

    /// Whether the driver keeps backing files on disk.
    pub fn uses_files(self) -> bool {
        !matches!(self, DriverKind::Mem)
    }

    pub fn name(self) -> &'static str {
        match self {
            DriverKind::Unix => "unix",
            DriverKind::Async => "async",
            DriverKind::Mmap => "mmap",
            DriverKind::Mem => "mem",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unix" => Some(DriverKind::Unix),
            "async" => Some(DriverKind::Async),
            "mmap" => Some(DriverKind::Mmap),
            "mem" => Some(DriverKind::Mem),
            _ => None,
        }
    }

    pub const ALL: [DriverKind; 4] = [
        DriverKind::Unix,
        DriverKind::Async,
        DriverKind::Mmap,
        DriverKind::Mem,
    ];
}

impl fmt::Display for DriverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Placement of contexts across the D disks of a real processor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layout {
    /// Each context lives whole on one disk.
    Whole,
    /// Context blocks are spread round-robin over all disks.
    Striped,
}

impl Layout {
    /// Whole contexts when every running thread can own a disk, striping otherwise.
    pub fn default_for(k: usize, d: usize) -> Self {
        if k >= d {
            Layout::Whole
        } else {
            Layout::Striped
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "whole" => Some(Layout::Whole),
            "striped" => Some(Layout::Striped),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Layout::Whole => "whole",
            Layout::Striped => "striped",
        }
    }
}

/// Machine cost parameters used by the time predictors.
///
/// `swap_block` is zero by definition for the memory-mapped driver.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostParams {
    /// G: seconds per delivered block.
    pub delivery_block: f64,
    /// S: seconds per swapped block.
    pub swap_block: f64,
    /// g: seconds per network packet.
    pub net_packet: f64,
    /// b: network packet size in bytes.
    pub packet_bytes: f64,
    /// l: network superstep overhead in seconds.
    pub net_superstep: f64,
    /// L: virtual superstep overhead in seconds.
    pub virtual_superstep: f64,
}

impl CostParams {
    /// Every parameter set to one; handy for checking formula structure.
    pub fn unit() -> Self {
        CostParams {
            delivery_block: 1.0,
            swap_block: 1.0,
            net_packet: 1.0,
            packet_bytes: 1.0,
            net_superstep: 1.0,
            virtual_superstep: 1.0,
        }
    }

    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("G", self.delivery_block),
            ("S", self.swap_block),
            ("g", self.net_packet),
            ("b", self.packet_bytes),
            ("l", self.net_superstep),
            ("L", self.virtual_superstep),
        ]
    }
}

/// All run-time parameters of one real processor.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// P: real processors.
    pub p: usize,
    /// v: virtual processors.
    pub v: usize,
    /// k: concurrently running threads (memory partitions) per real processor.
    pub k: usize,
    /// μ: context size in bytes.
    pub mu: usize,
    /// D: disks per real processor.
    pub d: usize,
    /// B: block size in bytes.
    pub block_size: usize,
    /// σ: shared-buffer size in bytes.
    pub sigma: usize,
    /// α: destination threads per network chunk.
    pub alpha: usize,
    pub driver: DriverKind,
    pub layout: Layout,
    /// Swap whole contexts instead of allocated regions only.
    pub strict_accounting: bool,
    /// One directory per disk.
    pub disk_paths: Vec<String>,
    /// Index of this real processor.
    pub rank: usize,
    pub seed: u64,
    /// `HOST:PORT` of every rank, required when P > 1.
    pub hosts: Vec<String>,
    /// Request depth per async queue.
    pub queue_depth: usize,
    /// Message bound ω for the indirect baseline; reserves its staging area.
    pub indirect_omega: Option<usize>,
    /// Keep the last round resident across barriers.
    pub keep_last_resident: bool,
    pub cost: Option<CostParams>,
}

impl SimConfig {
    /// A configuration with the documented defaults for everything but P, v, k and μ.
    pub fn new(p: usize, v: usize, k: usize, mu: usize) -> Self {
        SimConfig {
            p,
            v,
            k,
            mu,
            d: 1,
            block_size: DEFAULT_BLOCK_SIZE,
            sigma: DEFAULT_SIGMA,
            alpha: if p > 0 { (v / p).max(1) } else { 1 },
            driver: DriverKind::Unix,
            layout: Layout::default_for(k, 1),
            strict_accounting: false,
            disk_paths: Vec::new(),
            rank: 0,
            seed: 0,
            hosts: Vec::new(),
            queue_depth: DEFAULT_QUEUE_DEPTH,
            indirect_omega: None,
            keep_last_resident: false,
            cost: None,
        }
    }

    /// Virtual processors hosted by this real processor.
    pub fn local_vps(&self) -> usize {
        self.v / self.p
    }

    /// Global id of local thread `t`.
    pub fn rho(&self, t: usize) -> usize {
        t * self.p + self.rank
    }

    /// Memory partition used by local thread `t`.
    pub fn partition_of(&self, t: usize) -> usize {
        t % self.k
    }

    /// Blocks per context.
    pub fn blocks_per_context(&self) -> usize {
        self.mu / self.block_size
    }
}

/// One broken invariant.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("P must be at least 1")]
    NoProcessors,
    #[error("v must be at least P (v={v}, P={p})")]
    TooFewVps { v: usize, p: usize },
    #[error("v not divisible by P (v={v}, P={p})")]
    VNotDivisible { v: usize, p: usize },
    #[error("k must be at least 1")]
    KZero,
    #[error("k exceeds v/P (k={k}, v/P={max})")]
    KExceedsLocal { k: usize, max: usize },
    #[error("D must be at least 1")]
    NoDisks,
    #[error("B must be at least 1")]
    ZeroBlockSize,
    #[error("mu must be positive")]
    MuZero,
    #[error("mu not a multiple of B (mu={mu}, B={b})")]
    MuNotMultiple { mu: usize, b: usize },
    #[error("alpha must be at least 1")]
    AlphaZero,
    #[error("alpha must be below v (alpha={alpha}, v={v})")]
    AlphaTooLarge { alpha: usize, v: usize },
    #[error("disk_paths must have D entries (D={d}, got {got})")]
    DiskPathCount { d: usize, got: usize },
    #[error("rank out of range (rank={rank}, P={p})")]
    RankOutOfRange { rank: usize, p: usize },
    #[error("hosts must list every rank (P={p}, got {got})")]
    HostCount { p: usize, got: usize },
    #[error("memory-mapped driver requires the whole-context layout")]
    MmapStriped,
    #[error("sigma must be positive")]
    SigmaZero,
    #[error("queue depth must be at least 1")]
    QueueDepthZero,
    #[error("cost parameter {name} must be a non-negative number (got {value})")]
    CostNegative { name: &'static str, value: f64 },
    #[error("S must be 0 exactly when the driver is memory-mapped (driver={driver}, S={s})")]
    SwapCost { driver: DriverKind, s: f64 },
    #[error("indirect omega must be positive")]
    IndirectOmegaZero,
    #[error("indirect baseline requires P = 1 (P={p})")]
    IndirectParallel { p: usize },
}

/// Every violation found in a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

impl ConfigError {
    pub fn contains(&self, pred: impl Fn(&Violation) -> bool) -> bool {
        self.violations.iter().any(pred)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid configuration: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl core::error::Error for ConfigError {}

/// Returns `raw` unchanged if every invariant holds, otherwise all violations.
pub fn validate(raw: SimConfig) -> Result<SimConfig, ConfigError> {
    let mut out = Vec::new();
    let c = &raw;
    if c.p == 0 {
        out.push(Violation::NoProcessors);
    } else {
        if c.v < c.p {
            out.push(Violation::TooFewVps { v: c.v, p: c.p });
        }
        if !c.v.is_multiple_of(c.p) {
            out.push(Violation::VNotDivisible { v: c.v, p: c.p });
        }
        if c.rank >= c.p {
            out.push(Violation::RankOutOfRange { rank: c.rank, p: c.p });
        }
        if c.p > 1 && c.hosts.len() != c.p {
            out.push(Violation::HostCount { p: c.p, got: c.hosts.len() });
        }
    }
    if c.k == 0 {
        out.push(Violation::KZero);
    } else if c.p > 0 && c.k > c.v / c.p {
        out.push(Violation::KExceedsLocal { k: c.k, max: c.v / c.p });
    }
    if c.d == 0 {
        out.push(Violation::NoDisks);
    }
    if c.block_size == 0 {
        out.push(Violation::ZeroBlockSize);
    }
    if c.mu == 0 {
        out.push(Violation::MuZero);
    } else if c.block_size > 0 && !c.mu.is_multiple_of(c.block_size) {
        out.push(Violation::MuNotMultiple { mu: c.mu, b: c.block_size });
    }
    if c.alpha == 0 {
        out.push(Violation::AlphaZero);
    } else if c.p > 1 && c.alpha >= c.v {
        out.push(Violation::AlphaTooLarge { alpha: c.alpha, v: c.v });
    }
    if c.driver.uses_files() && c.disk_paths.len() != c.d {
        out.push(Violation::DiskPathCount { d: c.d, got: c.disk_paths.len() });
    }
    if c.driver == DriverKind::Mmap && c.layout == Layout::Striped {
        out.push(Violation::MmapStriped);
    }
    if c.sigma == 0 {
        out.push(Violation::SigmaZero);
    }
    if c.queue_depth == 0 {
        out.push(Violation::QueueDepthZero);
    }
    if let Some(w) = c.indirect_omega {
        if w == 0 {
            out.push(Violation::IndirectOmegaZero);
        }
        if c.p > 1 {
            out.push(Violation::IndirectParallel { p: c.p });
        }
    }
    if let Some(cost) = &c.cost {
        for (name, value) in cost.fields() {
            // NaN fails this comparison too.
            if !(value >= 0.0) {
                out.push(Violation::CostNegative { name, value });
            }
        }
        let mapped = c.driver == DriverKind::Mmap;
        if mapped != (cost.swap_block == 0.0) {
            out.push(Violation::SwapCost { driver: c.driver, s: cost.swap_block });
        }
    }
    if out.is_empty() {
        Ok(raw)
    } else {
        Err(ConfigError { violations: out })
    }
}
