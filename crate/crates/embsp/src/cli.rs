//! Command-line front end: runs an application or prints cost predictions.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use embsp_core::costmodel::{self as cm, PredictionInput};
use embsp_core::{config, Category, CostParams, CounterSnapshot, DriverKind, Layout, SimConfig};

use crate::apps::{self, App, AppRun};
use crate::error::{Error, Result};
use crate::runtime::{RunOptions, Runtime};

#[derive(Parser, Debug, Clone)]
#[command(name = "embsp", version, about = "External-memory BSP simulation harness")]
pub struct Cli {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Print the analytical I/O, buffer and time predictions for the configuration.
    Predict(PredictArgs),
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    /// ω, the largest single message in bytes.
    #[arg(long, default_value_t = 4096)]
    pub omega: u64,
    /// ε, bytes per data element.
    #[arg(long, default_value_t = 4)]
    pub epsilon: u64,
    /// π, bytes per count integer.
    #[arg(long, default_value_t = 8)]
    pub pi: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum IoArg {
    Unix,
    Async,
    Mmap,
    Mem,
}

impl From<IoArg> for DriverKind {
    fn from(a: IoArg) -> Self {
        match a {
            IoArg::Unix => DriverKind::Unix,
            IoArg::Async => DriverKind::Async,
            IoArg::Mmap => DriverKind::Mmap,
            IoArg::Mem => DriverKind::Mem,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutArg {
    Whole,
    Striped,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppArg {
    Psrs,
    Psum,
    Alltoall,
}

impl From<AppArg> for App {
    fn from(a: AppArg) -> Self {
        match a {
            AppArg::Psrs => App::Psrs,
            AppArg::Psum => App::Psum,
            AppArg::Alltoall => App::Alltoall,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    /// P, real processors.
    #[arg(long = "p", default_value_t = 1, global = true)]
    pub p: usize,
    /// Index of this real processor.
    #[arg(long, default_value_t = 0, global = true)]
    pub rank: usize,
    /// v, virtual processors (default P).
    #[arg(long = "v", global = true)]
    pub v: Option<usize>,
    /// k, memory partitions per real processor.
    #[arg(long = "k", default_value_t = 1, global = true)]
    pub k: usize,
    /// μ, context size in bytes.
    #[arg(long, default_value_t = 1 << 20, global = true)]
    pub mu: usize,
    /// One directory per disk, comma separated (default: the system temporary directory).
    #[arg(long, value_delimiter = ',', global = true)]
    pub disks: Vec<PathBuf>,
    /// D for the in-memory driver when no directories are given.
    #[arg(long = "d", global = true)]
    pub d: Option<usize>,
    /// B, block size in bytes.
    #[arg(long, default_value_t = 4096, global = true)]
    pub block_size: usize,
    /// σ, shared-buffer size in bytes.
    #[arg(long, default_value_t = 64 << 20, global = true)]
    pub sigma: usize,
    /// α, destination threads per network chunk (default v/P).
    #[arg(long, global = true)]
    pub alpha: Option<usize>,
    #[arg(long = "io", value_enum, default_value_t = IoArg::Unix, global = true)]
    pub io: IoArg,
    /// Context layout (default whole when k ≥ D, else striped).
    #[arg(long, value_enum, global = true)]
    pub layout: Option<LayoutArg>,
    /// Swap whole contexts so counters follow the closed-form accounting.
    #[arg(long, global = true)]
    pub strict_accounting: bool,
    /// HOST:PORT of every rank, comma separated.
    #[arg(long, value_delimiter = ',', global = true)]
    pub hosts: Vec<String>,
    /// Request depth per async queue.
    #[arg(long, default_value_t = 8, global = true)]
    pub queue_depth: usize,
    /// Reserve the staging area of the indirect all-to-all for messages up to this size.
    #[arg(long, global = true)]
    pub indirect_omega: Option<usize>,
    /// Keep the last thread of a partition resident across barriers.
    #[arg(long, global = true)]
    pub keep_last_resident: bool,
    #[arg(long, value_enum, global = true)]
    pub app: Option<AppArg>,
    /// Elements of input.
    #[arg(long, default_value_t = 1 << 20, global = true)]
    pub n: usize,
    #[arg(long, default_value_t = 1, global = true)]
    pub seed: u64,
    /// Write per-thread benchmark marks to this file.
    #[arg(long, global = true)]
    pub bench_out: Option<PathBuf>,
    /// Cost parameters G,S,g,b,l,L in seconds (b in bytes); S is 0 under mmap.
    #[arg(long, global = true)]
    pub cost: Option<String>,
}

fn parse_cost(s: &str) -> Result<CostParams> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Usage(format!("malformed cost value {x:?}"))))
        .collect::<Result<_>>()?;
    if parts.len() != 6 {
        return Err(Error::Usage(format!("--cost takes six values G,S,g,b,l,L, got {}", parts.len())));
    }
    Ok(CostParams {
        delivery_block: parts[0],
        swap_block: parts[1],
        net_packet: parts[2],
        packet_bytes: parts[3],
        net_superstep: parts[4],
        virtual_superstep: parts[5],
    })
}

impl SimArgs {
    /// The validated configuration these flags describe.
    pub fn config(&self) -> Result<SimConfig> {
        let v = self.v.unwrap_or(self.p);
        let mut cfg = SimConfig::new(self.p, v, self.k, self.mu);
        cfg.driver = self.io.into();
        cfg.block_size = self.block_size;
        cfg.sigma = self.sigma;
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        cfg.disk_paths = if self.disks.is_empty() {
            if cfg.driver.uses_files() {
                vec![std::env::temp_dir().to_string_lossy().into_owned()]
            } else {
                Vec::new()
            }
        } else {
            self.disks.iter().map(|p| p.to_string_lossy().into_owned()).collect()
        };
        cfg.d = match self.d {
            Some(d) if cfg.disk_paths.is_empty() => d,
            _ => cfg.disk_paths.len().max(1),
        };
        cfg.layout = match self.layout {
            Some(LayoutArg::Whole) => Layout::Whole,
            Some(LayoutArg::Striped) => Layout::Striped,
            None => Layout::default_for(cfg.k, cfg.d),
        };
        cfg.strict_accounting = self.strict_accounting;
        cfg.rank = self.rank;
        cfg.seed = self.seed;
        cfg.hosts = self.hosts.clone();
        cfg.queue_depth = self.queue_depth;
        cfg.indirect_omega = self.indirect_omega;
        cfg.keep_last_resident = self.keep_last_resident;
        let mut cost = match &self.cost {
            Some(s) => parse_cost(s)?,
            None => CostParams::unit(),
        };
        if cfg.driver == DriverKind::Mmap {
            cost.swap_block = 0.0;
        }
        cfg.cost = Some(cost);
        Ok(config::validate(cfg)?)
    }
}

/// Parses `argv` (program name first).
pub fn parse_cli<I, T>(argv: I) -> Result<Cli>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv).map_err(|e| Error::Usage(e.to_string()))
}

/// The predictions printed by `predict`.
pub fn predictions(cfg: &SimConfig, n: usize, args: &PredictArgs) -> String {
    let (v, p, k, d) = (cfg.v as u64, cfg.p as u64, cfg.k as u64, cfg.d as u64);
    let (mu, b, w, alpha) = (cfg.mu as u64, cfg.block_size as u64, args.omega, cfg.alpha as u64);
    let x = PredictionInput {
        v,
        p,
        k,
        d,
        mu,
        omega: w,
        block: b,
        n: n as u64,
        alpha,
        pi: args.pi,
        epsilon: args.epsilon,
        cost: cfg.cost.unwrap_or_else(CostParams::unit),
    };
    let mut out = String::new();
    let mut row = |name: &str, value: String| {
        let _ = writeln!(out, "{name:<28} {value}");
    };
    row("# quantity", "value".into());
    row("io_pems1_alltoallv", cm::io_pems1_alltoallv(v, mu, w).to_string());
    row("disk_pems1", cm::disk_pems1(v, mu, w).to_string());
    row("disk_pems2_per_rank", cm::disk_pems2(v, p, mu).to_string());
    row("direct_messages", cm::direct_count(v, k).to_string());
    row("indirect_messages", cm::indirect_count(v, k).to_string());
    row("io_alltoallv_seq", cm::io_alltoallv_seq(v, k, mu, w, b).to_string());
    row("delta_vs_baseline", cm::delta_vs_baseline(v, k, mu, w, b).to_string());
    row("io_alltoallv_par", cm::io_alltoallv_par(v, p, k, mu, w, b).to_string());
    row("buf_alltoallv_seq", cm::buf_alltoallv_seq(v, p, b).to_string());
    row("buf_alltoallv_par", cm::buf_alltoallv_par(v, p, b, alpha, k, w).to_string());
    row("buf_bcast", cm::buf_bcast(w).to_string());
    row("buf_gather", cm::buf_gather(v, w).to_string());
    row("buf_reduce", cm::buf_reduce(k, n as u64, args.epsilon).to_string());
    row("net_exchanges", cm::net_exchanges(v, p, k, alpha).to_string());
    row("reduce_tree_rounds", cm::reduce_tree_rounds(p).to_string());
    row("psrs_max_message", cm::psrs_max_message(n as u64, v, args.epsilon).to_string());
    row("time_bcast", format!("{:.6}", cm::time_bcast(&x)));
    row("time_gather", format!("{:.6}", cm::time_gather(&x)));
    row("time_reduce", format!("{:.6}", cm::time_reduce(&x)));
    row("time_reduce_total", format!("{:.6}", cm::time_reduce_total(&x)));
    row("time_alltoallv_seq", format!("{:.6}", cm::time_alltoallv_seq(&x)));
    row("time_alltoallv_par", format!("{:.6}", cm::time_alltoallv_par(&x)));
    row("time_pems1_alltoallv", format!("{:.6}", cm::time_pems1_alltoallv(&x)));
    out
}

/// Counter table: one row per category with logical and physical bytes.
pub fn counter_table(c: &CounterSnapshot) -> String {
    let mut out = format!("{:<16} {:>16} {:>16}\n", "# category", "logical", "physical");
    for cat in Category::ALL {
        let _ = writeln!(out, "{:<16} {:>16} {:>16}", cat.name(), c.get(cat), c.physical(cat));
    }
    let _ = writeln!(out, "{:<16} {:>16} {:>16}", "total", c.total(), c.physical_total());
    let _ = writeln!(
        out,
        "messages direct={} indirect={} remote={}",
        c.direct_msgs, c.indirect_msgs, c.remote_msgs
    );
    out
}

fn report(cfg: &SimConfig, n: usize, run: &AppRun) -> String {
    let check = if run.app == App::Psrs { "sorted-check" } else { "check" };
    let mut out = format!(
        "app {} n={n} P={} rank={} v={} k={} mu={} io={}\n",
        run.app.name(),
        cfg.p,
        cfg.rank,
        cfg.v,
        cfg.k,
        cfg.mu,
        cfg.driver.name()
    );
    let _ = writeln!(out, "{check} {}", if run.ok { "PASS" } else { "FAIL" });
    let _ = writeln!(out, "seconds {:.6}", run.elapsed.as_secs_f64());
    out.push_str(&counter_table(&run.counters));
    out
}

/// Runs the command line; returns the process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok((text, ok)) => {
            print!("{text}");
            if ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Executes a parsed command line; returns its output and whether it succeeded.
pub fn execute(cli: &Cli) -> Result<(String, bool)> {
    let cfg = cli.sim.config()?;
    if let Some(Command::Predict(args)) = &cli.command {
        return Ok((predictions(&cfg, cli.sim.n, args), true));
    }
    let app: App = cli.sim.app.ok_or_else(|| Error::Usage("nothing to do: pass --app or a subcommand".into()))?.into();
    let opts = RunOptions { bench: cli.sim.bench_out.is_some(), ..RunOptions::default() };
    let rt = Runtime::with_options(cfg.clone(), opts)?;
    let run = apps::run_app(&rt, app, cli.sim.n, cli.sim.seed)?;
    if let (Some(path), Some(table)) = (&cli.sim.bench_out, &run.bench) {
        std::fs::write(path, table).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    Ok((report(&cfg, cli.sim.n, &run), run.ok))
}
