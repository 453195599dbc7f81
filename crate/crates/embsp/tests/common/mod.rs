//! Shared fixtures: configurations, randomized message patterns and oracles.

#![allow(dead_code)]

pub mod criteria;

use embsp::{DriverKind, Layout, MsgSpec, Region, Runtime, SimConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

/// A configuration whose disks live in a fresh temporary directory.
pub struct Fixture {
    pub cfg: SimConfig,
    pub dir: Option<TempDir>,
}

pub fn fixture(driver: DriverKind, v: usize, k: usize, mu: usize, b: usize) -> Fixture {
    let mut cfg = SimConfig::new(1, v, k, mu);
    cfg.block_size = b;
    cfg.driver = driver;
    cfg.layout = Layout::Whole;
    let dir = driver.uses_files().then(|| TempDir::new().unwrap());
    if let Some(d) = &dir {
        cfg.disk_paths = vec![d.path().to_string_lossy().into_owned()];
    }
    Fixture { cfg, dir }
}

/// Adds another temporary directory per rank for `p` ranks.
pub fn cluster_fixtures(driver: DriverKind, p: usize, v: usize, k: usize, mu: usize, b: usize) -> Vec<Fixture> {
    (0..p)
        .map(|rank| {
            let mut f = fixture(driver, v, k, mu, b);
            f.cfg.p = p;
            f.cfg.rank = rank;
            f.cfg.hosts = (0..p).map(|r| format!("127.0.0.1:{}", 40000 + r)).collect();
            f.cfg.alpha = (v / p).max(1).min(v - 1).max(1);
            f
        })
        .collect()
}

pub fn byte(seed: u64, src: usize, dst: usize, idx: usize) -> u8 {
    let x = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((src as u64) << 40 ^ (dst as u64) << 20 ^ idx as u64);
    let x = (x ^ (x >> 29)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    (x ^ (x >> 32)) as u8
}

/// A full all-to-all pattern: per VP its send and receive regions.
#[derive(Clone, Debug)]
pub struct Case {
    pub v: usize,
    pub mu: usize,
    pub seed: u64,
    pub specs: Vec<MsgSpec>,
}

/// Random lengths from `lens`, random gaps and a shuffled receive order.
pub fn random_case(seed: u64, v: usize, b: usize, lens: &[usize]) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: Vec<Vec<usize>> = (0..v).map(|_| (0..v).map(|_| *lens.choose(&mut rng).unwrap()).collect()).collect();
    let mut ends = Vec::new();
    let mut raw = Vec::new();
    for i in 0..v {
        let mut at = rng.gen_range(0..b);
        let mut send = Vec::new();
        for j in 0..v {
            send.push(Region::new(at, len[i][j]));
            at += len[i][j] + rng.gen_range(0..b);
        }
        let mut order: Vec<usize> = (0..v).collect();
        order.shuffle(&mut rng);
        let mut recv = vec![Region::new(0, 0); v];
        for src in order {
            at += rng.gen_range(0..b);
            recv[src] = Region::new(at, len[src][i]);
            at += len[src][i];
        }
        ends.push(at);
        raw.push(MsgSpec::new(send, recv));
    }
    let mu = (ends.iter().max().unwrap() / b + 1) * b;
    Case { v, mu, seed, specs: raw }
}

/// Every message spans whole unaligned block boundaries: each receive region
/// starts one byte into a block, so every message touches two boundary blocks.
pub fn unaligned_uniform(v: usize, b: usize, omega: usize) -> Case {
    let stride = omega.div_ceil(b) * b + b;
    let send_base = 1;
    let recv_base = v * stride + b + 1;
    let spec = MsgSpec::uniform(v, send_base, recv_base, omega, stride);
    let mu = (recv_base + v * stride) / b * b + b;
    Case { v, mu, seed: 7, specs: vec![spec; v] }
}

/// Contexts before the call: send regions filled, everything else zero.
pub fn initial(case: &Case, rho: usize) -> Vec<u8> {
    let mut ctx = vec![0u8; case.mu];
    for (j, r) in case.specs[rho].send.iter().enumerate() {
        for (x, c) in ctx[r.offset..r.end()].iter_mut().enumerate() {
            *c = byte(case.seed, rho, j, x);
        }
    }
    ctx
}

/// Contexts after the call, computed directly.
pub fn expected(case: &Case, rho: usize) -> Vec<u8> {
    let mut ctx = initial(case, rho);
    for (i, r) in case.specs[rho].recv.iter().enumerate() {
        let src = initial(case, i);
        let s = case.specs[i].send[rho];
        ctx[r.offset..r.end()].copy_from_slice(&src[s.offset..s.end()]);
    }
    ctx
}

/// Runs one all-to-all with `cfg` and returns the final context of every VP of this rank.
pub fn run_case(rt: &Runtime, case: &Case, indirect: bool) -> Vec<(usize, Vec<u8>)> {
    let report = rt
        .run(|vp| {
            let rho = vp.rank();
            let all = vp.alloc(case.mu)?;
            let init = initial(case, rho);
            vp.bytes_mut(all).copy_from_slice(&init);
            if indirect {
                vp.alltoallv_indirect(&case.specs[rho])?;
            } else {
                vp.alltoallv(&case.specs[rho])?;
            }
            Ok(vp.bytes(all).to_vec())
        })
        .unwrap();
    report.rhos.into_iter().zip(report.results).collect()
}

/// Runs `program` on `p` ranks connected over local TCP, one runtime per rank;
/// returns every rank's report in rank order.
pub fn run_cluster<T, F>(fixtures: &[Fixture], opts: embsp::RunOptions, program: F) -> Vec<embsp::RunReport<T>>
where
    T: Send,
    F: Fn(&mut embsp::Vp<'_>) -> embsp::Result<T> + Sync,
{
    let transports = embsp::net::Transport::local_cluster(fixtures.len()).unwrap();
    std::thread::scope(|s| {
        let handles: Vec<_> = fixtures
            .iter()
            .zip(transports)
            .map(|(f, tr)| {
                let program = &program;
                let opts = opts.clone();
                s.spawn(move || {
                    let rt = Runtime::with_transport(f.cfg.clone(), tr, opts).unwrap();
                    rt.run(program).unwrap()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coll {
    Bcast,
    Gather,
    Reduce,
    Allreduce,
    Allgather,
    Alltoall,
    Gatherv,
    Scatter,
    Allgatherv,
}

impl Coll {
    pub const ALL: [Coll; 9] = [
        Coll::Bcast,
        Coll::Gather,
        Coll::Reduce,
        Coll::Allreduce,
        Coll::Allgather,
        Coll::Alltoall,
        Coll::Gatherv,
        Coll::Scatter,
        Coll::Allgatherv,
    ];
}

/// One rooted or derived collective call with per-VP buffer placement.
#[derive(Clone, Debug)]
pub struct CollCase {
    pub kind: Coll,
    pub v: usize,
    pub mu: usize,
    pub root: usize,
    /// Per-VP send length (bytes), or the uniform length for fixed-size calls.
    pub lens: Vec<usize>,
    pub send: Vec<Region>,
    pub recv: Vec<Region>,
    pub dtype: embsp::Datatype,
    pub op: embsp::BuiltinOp,
    pub seed: u64,
}

const OPS: [(embsp::Datatype, embsp::BuiltinOp); 5] = [
    (embsp::Datatype::U32, embsp::BuiltinOp::Sum),
    (embsp::Datatype::I32, embsp::BuiltinOp::Min),
    (embsp::Datatype::I64, embsp::BuiltinOp::Max),
    (embsp::Datatype::U64, embsp::BuiltinOp::Sum),
    (embsp::Datatype::U64, embsp::BuiltinOp::Min),
];

pub fn random_coll(seed: u64, kind: Coll, v: usize, b: usize) -> CollCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = rng.gen_range(0..v);
    let (dtype, op) = OPS[rng.gen_range(0..OPS.len())];
    let sizes = [0, 1, 3, b - 1, b, b + 1, 2 * b + 7];
    let w = match kind {
        Coll::Reduce | Coll::Allreduce => dtype.width() * rng.gen_range(0..(2 * b / dtype.width()).max(2)),
        _ => *sizes.choose(&mut rng).unwrap(),
    };
    let lens: Vec<usize> = match kind {
        Coll::Gatherv | Coll::Scatter | Coll::Allgatherv => (0..v).map(|_| *sizes.choose(&mut rng).unwrap()).collect(),
        _ => vec![w; v],
    };
    let total: usize = lens.iter().sum();
    let (send_len, recv_len): (Box<dyn Fn(usize) -> usize>, Box<dyn Fn(usize) -> usize>) = match kind {
        Coll::Bcast => (Box::new(|_| 0), Box::new(move |_| w)),
        Coll::Gather => (Box::new(move |_| w), Box::new(move |r| if r == root { v * w } else { 0 })),
        Coll::Reduce => (Box::new(move |_| w), Box::new(move |r| if r == root { w } else { 0 })),
        Coll::Allreduce => (Box::new(move |_| w), Box::new(move |_| w)),
        Coll::Allgather => (Box::new(move |_| w), Box::new(move |_| v * w)),
        Coll::Alltoall => (Box::new(move |_| v * w), Box::new(move |_| v * w)),
        Coll::Gatherv => {
            let l = lens.clone();
            (Box::new(move |r| l[r]), Box::new(move |r| if r == root { total } else { 0 }))
        }
        Coll::Scatter => {
            let l = lens.clone();
            (Box::new(move |r| if r == root { total } else { 0 }), Box::new(move |r| l[r]))
        }
        Coll::Allgatherv => {
            let l = lens.clone();
            (Box::new(move |r| l[r]), Box::new(move |_| total))
        }
    };
    let mut send = Vec::new();
    let mut recv = Vec::new();
    let mut end = 0;
    for r in 0..v {
        let a = rng.gen_range(0..b);
        let rr = Region::new(a, recv_len(r));
        let s = Region::new(rr.end() + rng.gen_range(0..b), send_len(r));
        end = end.max(s.end());
        recv.push(rr);
        send.push(s);
    }
    let mu = (end / b + 1) * b;
    CollCase { kind, v, mu, root, lens, send, recv, dtype, op, seed }
}

/// Random initial context contents.
pub fn coll_initial(case: &CollCase, rho: usize) -> Vec<u8> {
    (0..case.mu).map(|x| byte(case.seed, rho, usize::MAX >> 8, x)).collect()
}

fn fold(case: &CollCase, parts: &[Vec<u8>]) -> Vec<u8> {
    use embsp::{BuiltinOp, Datatype};
    let w = case.dtype.width();
    let mut out = parts[0].clone();
    for p in &parts[1..] {
        for (a, b) in out.chunks_exact_mut(w).zip(p.chunks_exact(w)) {
            macro_rules! apply {
                ($t:ty) => {{
                    let x = <$t>::from_le_bytes(a.try_into().unwrap());
                    let y = <$t>::from_le_bytes(b.try_into().unwrap());
                    let z = match case.op {
                        BuiltinOp::Sum => x.wrapping_add(y),
                        BuiltinOp::Min => x.min(y),
                        BuiltinOp::Max => x.max(y),
                    };
                    a.copy_from_slice(&z.to_le_bytes());
                }};
            }
            match case.dtype {
                Datatype::U32 => apply!(u32),
                Datatype::I32 => apply!(i32),
                Datatype::U64 => apply!(u64),
                Datatype::I64 => apply!(i64),
                Datatype::F64 => unreachable!(),
            }
        }
    }
    out
}

/// Contexts after the call, computed from the initial contents alone.
pub fn coll_expected(case: &CollCase, rho: usize) -> Vec<u8> {
    let init: Vec<Vec<u8>> = (0..case.v).map(|r| coll_initial(case, r)).collect();
    let sent = |r: usize| init[r][case.send[r].offset..case.send[r].end()].to_vec();
    let mut ctx = init[rho].clone();
    let recv = case.recv[rho];
    let concat = || (0..case.v).flat_map(sent).collect::<Vec<u8>>();
    let put = |ctx: &mut Vec<u8>, data: &[u8]| ctx[recv.offset..recv.offset + data.len()].copy_from_slice(data);
    let v = case.v;
    match case.kind {
        Coll::Bcast => {
            let data = init[case.root][case.recv[case.root].offset..case.recv[case.root].end()].to_vec();
            put(&mut ctx, &data);
        }
        Coll::Gather | Coll::Gatherv if rho == case.root => put(&mut ctx, &concat()),
        Coll::Allgather | Coll::Allgatherv => put(&mut ctx, &concat()),
        Coll::Reduce if rho == case.root => put(&mut ctx, &fold(case, &(0..v).map(sent).collect::<Vec<_>>())),
        Coll::Allreduce => put(&mut ctx, &fold(case, &(0..v).map(sent).collect::<Vec<_>>())),
        Coll::Alltoall => {
            let w = case.lens[0];
            let data: Vec<u8> = (0..v).flat_map(|i| sent(i)[rho * w..(rho + 1) * w].to_vec()).collect();
            put(&mut ctx, &data);
        }
        Coll::Scatter => {
            let at: usize = case.lens[..rho].iter().sum();
            let data = sent(case.root)[at..at + case.lens[rho]].to_vec();
            put(&mut ctx, &data);
        }
        _ => {}
    }
    ctx
}

/// Runs the collective of `case` on `vp` and returns its final context.
pub fn coll_run(vp: &mut embsp::Vp<'_>, case: &CollCase) -> embsp::Result<Vec<u8>> {
    let rho = vp.rank();
    let all = vp.alloc(case.mu)?;
    let init = coll_initial(case, rho);
    vp.bytes_mut(all).copy_from_slice(&init);
    let (s, r) = (case.send[rho], case.recv[rho]);
    let op = embsp::ReduceOp::builtin(case.dtype, case.op);
    let parts = |base: usize| -> Vec<Region> {
        let mut at = base;
        case.lens
            .iter()
            .map(|&l| {
                let x = Region::new(at, l);
                at += l;
                x
            })
            .collect()
    };
    match case.kind {
        Coll::Bcast => vp.bcast(case.root, r)?,
        Coll::Gather => vp.gather(case.root, s, r)?,
        Coll::Reduce => vp.reduce(case.root, s, r, &op)?,
        Coll::Allreduce => vp.allreduce(s, r, &op)?,
        Coll::Allgather => vp.allgather(s, r)?,
        Coll::Alltoall => vp.alltoall(s, r, case.lens[0])?,
        Coll::Gatherv => vp.gatherv(case.root, s, &parts(r.offset))?,
        Coll::Scatter => vp.scatter(case.root, &parts(s.offset), r)?,
        Coll::Allgatherv => vp.allgatherv(s, &parts(r.offset))?,
    }
    Ok(vp.bytes(all).to_vec())
}
