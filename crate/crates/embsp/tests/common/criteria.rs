//! One check per acceptance criterion, shared by the integration tests and the
//! acceptance binary.

use std::time::{Duration, Instant};

use embsp::apps::psrs::{psrs, psrs_context_bytes, Keys};
use embsp::{Category, DriverKind, Layout, MsgSpec, Region, RunOptions, Runtime, SwapCause, SwapDir};

use super::*;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }

    /// Fails when `started` is older than `limit`.
    pub fn within(mut self, started: Instant, limit: Duration) -> Self {
        let took = started.elapsed();
        self.pass &= took < limit;
        self.detail = format!("{} [{:.1}s, limit {}s]", self.detail, took.as_secs_f64(), limit.as_secs());
        self
    }
}

fn file_sizes(rt: &Runtime) -> Vec<(String, u64)> {
    rt.backing_files()
        .into_iter()
        .map(|(p, _)| (p.to_string_lossy().into_owned(), std::fs::metadata(&p).unwrap().len()))
        .collect()
}

/// Indirect baseline: total bytes, indirect-area size and footprint.
pub fn criterion1() -> Outcome {
    let b = 64;
    let mut bad = Vec::new();
    let mut infeasible = Vec::new();
    let mut checked = 0;
    for v in [2, 4, 8] {
        for mu in [16 * b, 64 * b] {
            for omega in [b, 4 * b] {
                // v receive regions of ω bytes plus one shared send region of ω bytes.
                if (v + 1) * omega > mu {
                    infeasible.push(format!("v={v} μ={}B ω={}B", mu / b, omega / b));
                    continue;
                }
                let mut f = fixture(DriverKind::Unix, v, 1, mu, b);
                f.cfg.strict_accounting = true;
                f.cfg.indirect_omega = Some(omega);
                let rt = Runtime::new(f.cfg.clone()).unwrap();
                let spec = MsgSpec::new(vec![Region::new(0, omega); v], (1..=v).map(|i| Region::new(i * omega, omega)).collect());
                let report = rt
                    .run(|vp| {
                        let all = vp.alloc(mu)?;
                        let mark = vp.rank() as u8 + 1;
                        vp.bytes_mut(all).fill(mark);
                        vp.alltoallv_indirect(&spec)?;
                        Ok((1..=v).all(|i| vp.bytes(Region::new(i * omega, omega)).iter().all(|&x| x == i as u8)))
                    })
                    .unwrap();
                let (vv, mm, ww) = (v as u64, mu as u64, omega as u64);
                let total = report.counters.total();
                let want = 4 * vv * mm + 2 * vv * vv * ww;
                let files = file_sizes(&rt);
                let area: u64 = files.iter().filter(|(p, _)| p.contains("indirect")).map(|x| x.1).sum();
                let footprint: u64 = files.iter().map(|x| x.1).sum();
                checked += 1;
                if !report.results.iter().all(|&x| x)
                    || total != want
                    || area != vv * vv * ww
                    || footprint != vv * mm + vv * vv * ww
                {
                    bad.push(format!(
                        "v={v} μ={mu} ω={omega}: total {total} want {want}, area {area}, footprint {footprint}"
                    ));
                }
            }
        }
    }
    let mut detail = format!("{} grid points exact", checked - bad.len());
    if !bad.is_empty() {
        detail += &format!("; mismatches: {}", bad.join(", "));
    }
    if !infeasible.is_empty() {
        detail += &format!(
            "; not constructible (v messages of ω bytes need (v+1)ω ≤ μ): {}",
            infeasible.join(", ")
        );
    }
    Outcome::new(bad.is_empty() && infeasible.is_empty(), detail)
}

/// Direct delivery on the unaligned uniform fixture: measured bytes and direct count.
pub struct DirectPoint {
    pub v: usize,
    pub k: usize,
    pub mu: u64,
    pub omega: u64,
    pub b: u64,
    pub measured: u64,
    pub direct: u64,
    pub cache_high: usize,
}

pub fn direct_grid(driver: DriverKind) -> Vec<DirectPoint> {
    let (b, omega) = (64, 150);
    let mut out = Vec::new();
    for v in [4, 8] {
        for k in [1, 2, 4] {
            let case = unaligned_uniform(v, b, omega);
            let mut f = fixture(driver, v, k, case.mu, b);
            f.cfg.strict_accounting = true;
            let rt = Runtime::new(f.cfg.clone()).unwrap();
            let report = rt
                .run(|vp| {
                    let rho = vp.rank();
                    let all = vp.alloc(case.mu)?;
                    vp.bytes_mut(all).copy_from_slice(&initial(&case, rho));
                    vp.alltoallv(&case.specs[rho])?;
                    Ok(vp.bytes(all) == expected(&case, rho).as_slice())
                })
                .unwrap();
            assert!(report.results.iter().all(|&x| x), "wrong contents v={v} k={k}");
            let c = report.counters;
            out.push(DirectPoint {
                v,
                k,
                mu: case.mu as u64,
                omega: omega as u64,
                b: b as u64,
                measured: c.total() - c.get(Category::SwapIn),
                direct: c.direct_msgs,
                cache_high: report.buffers.cache,
            });
        }
    }
    out
}

pub fn criterion2(grid: &[DirectPoint]) -> Outcome {
    let mut bad = Vec::new();
    for p in grid {
        let (v, k) = (p.v as u64, p.k as u64);
        let want = v * p.mu + (v * v - v * k) / 2 * p.omega + 2 * v * v * p.b;
        let want_direct = (v * v + v * k) / 2;
        if p.measured != want || p.direct != want_direct {
            bad.push(format!(
                "v={v} k={k}: bytes {} want {want}, direct {} want {want_direct}",
                p.measured, p.direct
            ));
        }
    }
    Outcome::new(bad.is_empty(), if bad.is_empty() { format!("{} grid points exact", grid.len()) } else { bad.join("; ") })
}

pub fn criterion3(grid: &[DirectPoint]) -> Outcome {
    let mut bad = Vec::new();
    for p in grid {
        let (v, k, mu, w, b) = (p.v as i128, p.k as i128, p.mu as i128, p.omega as i128, p.b as i128);
        let lhs = 3 * v * mu + 2 * v * v * w - p.measured as i128;
        let rhs = 2 * v * mu + (3 * v * v + v * k) / 2 * w - 2 * v * v * b;
        if lhs != rhs {
            bad.push(format!("v={v} k={k}: {lhs} vs {rhs}"));
        }
    }
    Outcome::new(bad.is_empty(), if bad.is_empty() { format!("{} grid points exact", grid.len()) } else { bad.join("; ") })
}

/// Backing files hold (v/P)·μ bytes however much traffic passes through them.
pub fn criterion4() -> Outcome {
    let b = 64;
    let mut bad = Vec::new();
    let mut runs = 0;
    let lens = [0, 1, b - 1, b, b + 1, 3 * b + 7];
    for driver in [DriverKind::Unix, DriverKind::Async, DriverKind::Mmap] {
        for (v, k, d, layout) in [(4, 2, 1, Layout::Whole), (8, 3, 2, Layout::Striped), (6, 6, 3, Layout::Striped)] {
            if driver == DriverKind::Mmap && layout == Layout::Striped {
                continue;
            }
            let case = random_case(v as u64 * 13 + d as u64, v, b, &lens);
            let mut f = fixture(driver, v, k, case.mu, b);
            f.cfg.d = d;
            f.cfg.disk_paths = vec![f.cfg.disk_paths[0].clone(); d];
            f.cfg.layout = layout;
            let rt = Runtime::new(f.cfg.clone()).unwrap();
            let before: u64 = file_sizes(&rt).iter().map(|x| x.1).sum();
            let report = rt
                .run(|vp| {
                    let rho = vp.rank();
                    let all = vp.alloc(case.mu)?;
                    vp.bytes_mut(all).copy_from_slice(&initial(&case, rho));
                    for _ in 0..6 {
                        vp.alltoallv(&case.specs[rho])?;
                    }
                    Ok(())
                })
                .unwrap();
            let after: u64 = file_sizes(&rt).iter().map(|x| x.1).sum();
            let footprint = (v * case.mu) as u64;
            let traffic = report.counters.physical_total();
            runs += 1;
            let heavy = driver == DriverKind::Mmap || traffic > 4 * footprint;
            if before != footprint || after != footprint || !heavy {
                bad.push(format!("{driver:?} v={v} d={d}: files {before}/{after} want {footprint}, traffic {traffic}"));
            }
        }
    }
    let mut p2 = cluster_fixtures(DriverKind::Unix, 2, 8, 2, 4096, 64);
    for f in &mut p2 {
        f.cfg.strict_accounting = true;
    }
    let transports = embsp::net::Transport::local_cluster(2).unwrap();
    for (f, tr) in p2.iter().zip(transports) {
        let rt = Runtime::with_transport(f.cfg.clone(), tr, RunOptions::default()).unwrap();
        let size: u64 = file_sizes(&rt).iter().map(|x| x.1).sum();
        runs += 1;
        if size != 4 * 4096 {
            bad.push(format!("P=2 rank {}: files {size} want {}", f.cfg.rank, 4 * 4096));
        }
    }
    Outcome::new(bad.is_empty(), if bad.is_empty() { format!("{runs} configurations at (v/P)·μ") } else { bad.join("; ") })
}

/// Randomized all-to-all cases under one driver; returns the number that matched.
pub fn alltoallv_cases(driver: DriverKind, count: u64, first_seed: u64) -> (u64, Vec<String>) {
    let b = 64;
    let lens = [0, 1, b - 1, b, b + 1, 3 * b + 7];
    let mut ok = 0;
    let mut bad = Vec::new();
    for s in 0..count {
        let seed = first_seed + s;
        let v = 1 + (super::byte(seed, 1, 2, 3) as usize % 8);
        let k = 1 + (super::byte(seed, 4, 5, 6) as usize % 4).min(v - 1);
        let case = random_case(seed, v, b, &lens);
        let mut f = fixture(driver, v, k, case.mu, b);
        f.cfg.strict_accounting = seed.is_multiple_of(2);
        let rt = Runtime::new(f.cfg.clone()).unwrap();
        if run_case(&rt, &case, false).iter().all(|(rho, ctx)| *ctx == expected(&case, *rho)) {
            ok += 1;
        } else {
            bad.push(format!("{driver:?} seed {seed}"));
        }
    }
    (ok, bad)
}

/// Randomized rooted and derived collective cases under one driver.
pub fn collective_cases(driver: DriverKind, per_kind: u64, first_seed: u64) -> (u64, Vec<String>) {
    let b = 64;
    let mut ok = 0;
    let mut bad = Vec::new();
    for kind in Coll::ALL {
        for s in 0..per_kind {
            let seed = first_seed + s * 31 + kind as u64;
            let v = 1 + (super::byte(seed, 7, 8, 9) as usize % 8);
            let k = 1 + (super::byte(seed, 9, 8, 7) as usize % 4).min(v - 1);
            let case = random_coll(seed, kind, v, b);
            let mut f = fixture(driver, v, k, case.mu, b);
            f.cfg.strict_accounting = seed % 2 == 1;
            let rt = Runtime::new(f.cfg.clone()).unwrap();
            let report = rt.run(|vp| coll_run(vp, &case)).unwrap();
            if report.rhos.iter().zip(&report.results).all(|(rho, ctx)| *ctx == coll_expected(&case, *rho)) {
                ok += 1;
            } else {
                bad.push(format!("{kind:?} {driver:?} seed {seed}"));
            }
        }
    }
    (ok, bad)
}

/// Swap events of one strict bcast (or gather) on `p` ranks.
pub fn sync_run(driver: DriverKind, p: usize, v: usize, k: usize, root: usize, gather: bool, jitter: u64) -> Vec<embsp::RunReport<()>> {
    let mu = 4096;
    let opts = RunOptions { record_events: true, jitter: Some(jitter), ..RunOptions::default() };
    let program = |vp: &mut embsp::Vp<'_>| {
        let send = vp.alloc(100)?;
        let recv = vp.alloc(100 * vp.size())?;
        let mark = vp.rank() as u8;
        vp.bytes_mut(send).fill(mark);
        if gather {
            vp.gather(root, send, recv)?;
            if vp.rank() == root {
                assert!((0..vp.size()).all(|i| vp.bytes(recv)[i * 100] == i as u8));
            }
        } else {
            vp.bcast(root, send)?;
            assert!(vp.bytes(send).iter().all(|&x| x == root as u8));
        }
        Ok(())
    };
    let mut fs = cluster_fixtures(driver, p, v, k, mu, 64);
    for f in &mut fs {
        f.cfg.strict_accounting = true;
    }
    if p == 1 {
        let rt = Runtime::with_options(fs[0].cfg.clone(), opts).unwrap();
        vec![rt.run(program).unwrap()]
    } else {
        run_cluster(&fs, opts, program)
    }
}

/// Checks the signal-primitive swap bounds of one configuration.
pub fn sync_violations(driver: DriverKind, p: usize, v: usize, k: usize, root: usize, jitter: u64) -> Vec<String> {
    let mut bad = Vec::new();
    let (n, mu) = (v / p, 4096u64);
    for (rank, r) in sync_run(driver, p, v, k, root, false, jitter).iter().enumerate() {
        let waits: Vec<_> = r.events.iter().filter(|e| e.cause == SwapCause::BcastWait && e.dir == SwapDir::Out).collect();
        if rank == root % p {
            let root_t = root / p;
            if waits.iter().any(|e| e.thread % k != root_t % k) {
                bad.push(format!("bcast swap-out off the root partition (rank {rank}, jitter {jitter})"));
            }
            if waits.len() > n / k {
                bad.push(format!("{} bcast swap-outs > v/(Pk) = {}", waits.len(), n / k));
            }
        } else {
            let other: u64 = r
                .events
                .iter()
                .filter(|e| !matches!(e.cause, SwapCause::Superstep | SwapCause::Resume))
                .map(|e| e.logical)
                .sum();
            if other != 0 {
                bad.push(format!("first-thread path swapped {other} bytes on rank {rank}"));
            }
        }
    }
    for (rank, r) in sync_run(driver, p, v, k, root, true, jitter).iter().enumerate() {
        let bytes: u64 = r.events.iter().filter(|e| e.cause == SwapCause::GatherWait).map(|e| e.logical).sum();
        if bytes > n as u64 * mu {
            bad.push(format!("gather wait moved {bytes} > (v/P)μ on rank {rank}"));
        }
    }
    bad
}

pub fn criterion6(jitters: u64) -> Outcome {
    let mut bad = Vec::new();
    let mut runs = 0;
    for (p, v, k) in [(1, 8, 2), (1, 8, 1), (1, 6, 3), (1, 8, 4), (2, 8, 2), (2, 8, 1)] {
        for j in 0..jitters {
            let driver = DriverKind::ALL[(j as usize + v) % 4];
            let root = (j as usize * 3 + k) % v;
            bad.extend(sync_violations(driver, p, v, k, root, j));
            runs += 1;
        }
    }
    Outcome::new(bad.is_empty(), if bad.is_empty() { format!("{runs} bcast/gather runs within bounds") } else { bad.join("; ") })
}

/// Buffer high-water marks against their bounds.
pub fn criterion7(grid: &[DirectPoint]) -> Outcome {
    let mut bad = Vec::new();
    for p in grid {
        let bound = 2 * p.v * p.v * p.b as usize;
        if p.cache_high > bound {
            bad.push(format!("seq v={} k={}: {} > {bound}", p.v, p.k, p.cache_high));
        }
    }
    let b = 64;
    let (v, k, omega) = (8, 2, 150);
    let case = unaligned_uniform(v, b, omega);
    let fs = cluster_fixtures(DriverKind::Mem, 2, v, k, case.mu, b);
    let alpha = fs[0].cfg.alpha;
    let reports = run_cluster(&fs, RunOptions::default(), |vp| {
        let rho = vp.rank();
        let all = vp.alloc(case.mu)?;
        vp.bytes_mut(all).copy_from_slice(&initial(&case, rho));
        vp.alltoallv(&case.specs[rho])
    });
    for r in &reports {
        let bound = 2 * v * v * b / 2 + alpha * k * omega;
        if r.buffers.alltoallv > bound {
            bad.push(format!("par rank {}: {} > {bound}", r.rank, r.buffers.alltoallv));
        }
    }
    for (v, k, w) in [(8, 2, 64), (8, 4, 200), (5, 3, 8)] {
        let f = fixture(DriverKind::Mem, v, k, 4096, b);
        let rt = Runtime::new(f.cfg.clone()).unwrap();
        let r = rt
            .run(|vp| {
                let s = vp.alloc(w)?;
                let g = vp.alloc(v * w)?;
                let op = embsp::ReduceOp::builtin(embsp::Datatype::U64, embsp::BuiltinOp::Sum);
                vp.bcast(1, s)?;
                vp.gather(v - 1, s, g)?;
                vp.reduce(0, s, Region::new(g.offset, w), &op)
            })
            .unwrap();
        let eps = 8;
        let n = w / eps;
        if r.buffers.bcast > w || r.buffers.gather > v * w || r.buffers.reduce > k * n * eps {
            bad.push(format!("v={v} k={k} ω={w}: bcast {} gather {} reduce {}", r.buffers.bcast, r.buffers.gather, r.buffers.reduce));
        }
    }
    Outcome::new(bad.is_empty(), if bad.is_empty() { "all high-water marks within bounds".into() } else { bad.join("; ") })
}

pub struct PsrsResult {
    pub sorted: bool,
    pub balanced: bool,
    pub swap_in: u64,
    pub swap_out: u64,
    pub detail: String,
}

/// PSRS on `n` random keys and on a permutation, compared to a sequential sort.
pub fn psrs_check(driver: DriverKind, n: usize, v: usize, k: usize, seed: u64) -> PsrsResult {
    let b = 4096;
    let mu = psrs_context_bytes(n, v, b);
    let f = fixture(driver, v, k, mu, b);
    let rt = Runtime::new(f.cfg.clone()).unwrap();
    let report = rt.run(|vp| psrs(vp, n, Keys::Random(seed), true)).unwrap();
    let mut want = Keys::Random(seed).generate(n);
    want.sort_unstable();
    let mut got = Vec::with_capacity(n);
    let mut order: Vec<usize> = (0..report.rhos.len()).collect();
    order.sort_by_key(|&i| report.rhos[i]);
    for i in order {
        got.extend_from_slice(report.results[i].output.as_deref().unwrap());
    }
    let sorted = got == want && report.results.iter().all(|r| r.verified);
    let perm = rt.run(|vp| psrs(vp, n, Keys::Distinct(seed), false)).unwrap();
    let max = perm.results.iter().map(|r| r.count).max().unwrap();
    let balanced = max <= 2 * n / v + v && perm.results.iter().all(|r| r.verified);
    let c = report.counters;
    PsrsResult {
        sorted,
        balanced,
        swap_in: c.get(Category::SwapIn),
        swap_out: c.get(Category::SwapOut),
        detail: format!(
            "{driver:?} n={n}: allocated vμ = {} B vs k·μ = {} B RAM, max bucket {max} ≤ {}",
            v * mu,
            k * mu,
            2 * n / v + v
        ),
    }
}

/// Results of every collective kind on P=2 against P=1, plus network op counts.
pub fn criterion10(psrs_n: usize) -> Outcome {
    let (v, k, b) = (8, 2, 64);
    let mut bad = Vec::new();
    for (i, kind) in Coll::ALL.into_iter().enumerate() {
        let case = random_coll(500 + i as u64, kind, v, b);
        let one = fixture(DriverKind::Unix, v, k, case.mu, b);
        let single = Runtime::new(one.cfg.clone()).unwrap().run(|vp| coll_run(vp, &case)).unwrap();
        let fs = cluster_fixtures(DriverKind::Unix, 2, v, k, case.mu, b);
        let multi = run_cluster(&fs, RunOptions::default(), |vp| coll_run(vp, &case));
        for r in &multi {
            for (rho, ctx) in r.rhos.iter().zip(&r.results) {
                if single.results[*rho] != *ctx {
                    bad.push(format!("{kind:?} VP {rho} differs"));
                }
            }
            let (bc, ga, rr) = match kind {
                Coll::Bcast => (1, 0, 0),
                Coll::Gather => (0, v as u64 / 2, 0),
                Coll::Reduce => (0, 0, 1),
                Coll::Allreduce => (1, 0, 1),
                Coll::Allgather => (1, v as u64 / 2, 0),
                _ => (0, 0, 0),
            };
            if (r.net.bcast, r.net.gather, r.net.reduce_rounds) != (bc, ga, rr) {
                bad.push(format!(
                    "{kind:?} rank {}: bcast {} gather {} reduce rounds {}, want {bc} {ga} {rr}",
                    r.rank, r.net.bcast, r.net.gather, r.net.reduce_rounds
                ));
            }
        }
    }
    let mu = psrs_context_bytes(psrs_n, v, 4096);
    let one = fixture(DriverKind::Unix, v, k, mu, 4096);
    let single = Runtime::new(one.cfg.clone()).unwrap().run(|vp| psrs(vp, psrs_n, Keys::Random(9), true)).unwrap();
    let fs = cluster_fixtures(DriverKind::Unix, 2, v, k, mu, 4096);
    for r in run_cluster(&fs, RunOptions::default(), |vp| psrs(vp, psrs_n, Keys::Random(9), true)) {
        for (rho, out) in r.rhos.iter().zip(&r.results) {
            if single.results[*rho] != *out || !out.verified {
                bad.push(format!("PSRS VP {rho} differs"));
            }
        }
    }
    Outcome::new(bad.is_empty(), if bad.is_empty() { format!("9 collectives and PSRS n={psrs_n} equal at P=2") } else { bad.join("; ") })
}

/// The parallel formula at P=1 against the sequential one, then the worked examples.
pub fn criterion11(cases: u32) -> Outcome {
    use embsp::costmodel::*;
    use proptest::test_runner::{Config, TestRunner};
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let prop = runner.run(&(1u64..16, 1u64..16, 0u64..1 << 24, 0u64..1 << 16, 1u64..1 << 13), |(k, m, mu, w, b)| {
        let v = k * m;
        proptest::prop_assert_eq!(io_alltoallv_par(v, 1, k, mu, w, b), io_alltoallv_seq(v, k, mu, w, b));
        Ok(())
    });
    let gib = 1u128 << 30;
    let zero = PredictionInput {
        v: 8,
        p: 2,
        k: 2,
        d: 1,
        mu: 1 << 20,
        omega: 4096,
        block: 4096,
        n: 1000,
        alpha: 4,
        pi: 8,
        epsilon: 4,
        cost: embsp::CostParams::default(),
    };
    let examples = [
        ("baseline I/O", io_pems1_alltoallv(4, 1024, 64) == 18432),
        ("disk space", disk_pems2(16, 2, 2 << 30) == 16 * gib),
        ("sequential I/O", io_alltoallv_seq(4, 2, 1024, 64, 16) == 4864),
        ("improvement", delta_vs_baseline(4, 2, 1024, 64, 16) == 9472),
        ("direct count", direct_count(8, 2) == 40),
        ("reduce work", reduce_compute_time(4, 8, 2, 2) == 16.0 && reduce_tree_rounds(4) == 2),
        (
            "zero costs",
            [time_bcast(&zero), time_gather(&zero), time_reduce(&zero), time_alltoallv_seq(&zero), time_alltoallv_par(&zero)]
                .iter()
                .all(|&t| t == 0.0),
        ),
    ];
    let failed: Vec<&str> = examples.iter().filter(|e| !e.1).map(|e| e.0).collect();
    let mut detail = match &prop {
        Ok(()) => format!("{cases} random inputs agree"),
        Err(e) => format!("par≢seq: {e}"),
    };
    if failed.is_empty() {
        detail += &format!(", {} examples reproduce", examples.len());
    } else {
        detail += &format!(", examples differ: {}", failed.join(", "));
    }
    Outcome::new(prop.is_ok() && failed.is_empty(), detail)
}
