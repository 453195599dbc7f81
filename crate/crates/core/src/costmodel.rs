//! Analytical I/O volume, buffer space and time predictors.
//!
//! Byte counts are exact integers; terms with a `/2` are computed on the
//! combined numerator and checked to divide evenly. Times are `f64` seconds.

use crate::config::CostParams;

fn exact(num: i128, den: i128) -> i128 {
    assert!(den != 0 && num % den == 0, "formula is not integral ({num}/{den}); inputs need k | v/P");
    num / den
}

fn unsigned(x: i128) -> u128 {
    u128::try_from(x).expect("formula evaluated to a negative byte count")
}

/// ⌈x⌉ in the block sense: `x` rounded up to a multiple of `b`.
pub fn block_ceil(x: u64, b: u64) -> u64 {
    x.div_ceil(b) * b
}

/// ⌈lg p⌉, zero for a single processor.
pub fn lg_ceil(p: u64) -> u32 {
    assert!(p >= 1);
    u64::BITS - (p - 1).leading_zeros()
}

/// Indirect-delivery Alltoallv total I/O: 4vμ + 2v²ω.
pub fn io_pems1_alltoallv(v: u64, mu: u64, omega: u64) -> u128 {
    let (v, mu, omega) = (v as u128, mu as u128, omega as u128);
    4 * v * mu + 2 * v * v * omega
}

/// The message-path baseline used for the improvement comparison: 3vμ + 2v²ω.
pub fn io_pems1_baseline(v: u64, mu: u64, omega: u64) -> u128 {
    let (v, mu, omega) = (v as u128, mu as u128, omega as u128);
    3 * v * mu + 2 * v * v * omega
}

/// Disk space of the indirect scheme on one processor: vμ + v²ω.
pub fn disk_pems1(v: u64, mu: u64, omega: u64) -> u128 {
    let (v, mu, omega) = (v as u128, mu as u128, omega as u128);
    v * mu + v * v * omega
}

/// Per-processor disk space of the indirect scheme with a vμ indirect area: vμ/P + vμ.
pub fn disk_pems1_per_proc(v: u64, p: u64, mu: u64) -> u128 {
    let (v, p, mu) = (v as u128, p as u128, mu as u128);
    v * mu / p + v * mu
}

/// Direct-delivery disk space per rank: vμ/P.
pub fn disk_pems2(v: u64, p: u64, mu: u64) -> u128 {
    unsigned(exact(v as i128 * mu as i128, p as i128))
}

/// Messages delivered directly in internal superstep 1: (v² + vk)/2.
pub fn direct_count(v: u64, k: u64) -> u128 {
    let (v, k) = (v as i128, k as i128);
    unsigned(exact(v * v + v * k, 2))
}

/// Messages delivered from disk in internal superstep 2: v² − δ.
pub fn indirect_count(v: u64, k: u64) -> u128 {
    (v as u128) * (v as u128) - direct_count(v, k)
}

/// Direct deliveries among `n` local threads run in rounds of `k`, partial last round included.
pub fn direct_count_rounds(n: u64, k: u64) -> u128 {
    let mut total = 0u128;
    let mut start = 0;
    while start < n {
        let size = k.min(n - start);
        total += size as u128 * (start + size) as u128;
        start += size;
    }
    total
}

/// Direct-delivery Alltoallv on one processor: vμ + ((v² − vk)/2)ω + 2v²B.
pub fn io_alltoallv_seq(v: u64, k: u64, mu: u64, omega: u64, b: u64) -> u128 {
    let (v, k, mu, omega, b) = (v as i128, k as i128, mu as i128, omega as i128, b as i128);
    unsigned(v * mu + exact((v * v - v * k) * omega, 2) + 2 * v * v * b)
}

/// I/O saved against the 3vμ + 2v²ω baseline: 2vμ + ((3v² + vk)/2)ω − 2v²B.
pub fn delta_vs_baseline(v: u64, k: u64, mu: u64, omega: u64, b: u64) -> i128 {
    io_pems1_baseline(v, mu, omega) as i128 - io_alltoallv_seq(v, k, mu, omega, b) as i128
}

/// Closed form of [`delta_vs_baseline`].
pub fn delta_closed_form(v: u64, k: u64, mu: u64, omega: u64, b: u64) -> i128 {
    let (v, k, mu, omega, b) = (v as i128, k as i128, mu as i128, omega as i128, b as i128);
    2 * v * mu + exact((3 * v * v + v * k) * omega, 2) - 2 * v * v * b
}

/// Parallel direct-delivery Alltoallv, summed over all P ranks:
/// vμ + (v² − v²/(2P) − vk/2)ω + 2v²B.
///
/// Counts swap-outs, local direct and disk-staged deliveries, sender-side reads
/// and receiver-side writes of remote messages, and boundary flushes. Equals
/// [`io_alltoallv_seq`] when P = 1.
pub fn io_alltoallv_par(v: u64, p: u64, k: u64, mu: u64, omega: u64, b: u64) -> u128 {
    let (v, p, k, mu, omega, b) = (v as i128, p as i128, k as i128, mu as i128, omega as i128, b as i128);
    let coef = exact((2 * p * v * v - v * v - p * v * k) * omega, 2 * p);
    unsigned(v * mu + coef + 2 * v * v * b)
}

/// The parallel formula exactly as printed:
/// vμ/P + (v²/P + 3v²/(2P²) − kv/(2P) − v²)ω + 2v²B.
///
/// It does not reduce to the sequential formula at P = 1 and is kept only for comparison.
pub fn io_alltoallv_par_verbatim(v: u64, p: u64, k: u64, mu: u64, omega: u64, b: u64) -> f64 {
    let (v, p, k, mu, omega, b) = (v as f64, p as f64, k as f64, mu as f64, omega as f64, b as f64);
    v * mu / p + (v * v / p + 3.0 * v * v / (2.0 * p * p) - k * v / (2.0 * p) - v * v) * omega + 2.0 * v * v * b
}

/// Boundary-cache bound per rank: 2v²B/P.
pub fn buf_alltoallv_seq(v: u64, p: u64, b: u64) -> u128 {
    unsigned(exact(2 * (v as i128) * (v as i128) * b as i128, p as i128))
}

/// Cache plus network assembly bound per rank: 2v²B/P + αkω.
pub fn buf_alltoallv_par(v: u64, p: u64, b: u64, alpha: u64, k: u64, omega: u64) -> u128 {
    buf_alltoallv_seq(v, p, b) + alpha as u128 * k as u128 * omega as u128
}

pub fn buf_bcast(omega: u64) -> u128 {
    omega as u128
}

pub fn buf_gather(v: u64, omega: u64) -> u128 {
    v as u128 * omega as u128
}

/// k slots of n elements of ε bytes.
pub fn buf_reduce(k: u64, n: u64, epsilon: u64) -> u128 {
    k as u128 * n as u128 * epsilon as u128
}

/// Network exchanges per rank in one parallel Alltoallv: ⌈(v/P)/k⌉ rounds × ⌈(v/P)/α⌉ chunks.
/// Equals v²/(P²kα) when k and α divide v/P.
pub fn net_exchanges(v: u64, p: u64, k: u64, alpha: u64) -> u64 {
    let n = v / p;
    n.div_ceil(k) * n.div_ceil(alpha)
}

/// Rounds of the binary-tree reduction over P ranks.
pub fn reduce_tree_rounds(p: u64) -> u32 {
    lg_ceil(p)
}

/// Largest PSRS bucket message in bytes: 2nε/v².
pub fn psrs_max_message(n: u64, v: u64, epsilon: u64) -> u128 {
    2 * n as u128 * epsilon as u128 / (v as u128 * v as u128)
}

/// Everything the time predictors need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionInput {
    pub v: u64,
    pub p: u64,
    pub k: u64,
    pub d: u64,
    pub mu: u64,
    pub omega: u64,
    pub block: u64,
    pub n: u64,
    pub alpha: u64,
    /// π: bytes per count integer.
    pub pi: u64,
    /// ε: bytes per data element.
    pub epsilon: u64,
    pub cost: CostParams,
}

impl PredictionInput {
    fn f(&self) -> Floats {
        Floats {
            v: self.v as f64,
            p: self.p as f64,
            k: self.k as f64,
            d: self.d as f64,
            mu: self.mu as f64,
            omega: self.omega as f64,
            bb: self.block as f64,
            n: self.n as f64,
            alpha: self.alpha as f64,
            eps: self.epsilon as f64,
            lgp: lg_ceil(self.p) as f64,
            c: self.cost,
        }
    }
}

struct Floats {
    v: f64,
    p: f64,
    k: f64,
    d: f64,
    mu: f64,
    omega: f64,
    bb: f64,
    n: f64,
    alpha: f64,
    eps: f64,
    lgp: f64,
    c: CostParams,
}

/// Network term g·x/b, zero when no bytes move.
fn net(c: &CostParams, bytes: f64) -> f64 {
    if bytes == 0.0 || c.net_packet == 0.0 {
        0.0
    } else {
        c.net_packet * bytes / c.packet_bytes
    }
}

/// S·2vμ/(PkB) + G·vω/(PDB) + g·ω/b + l + L.
pub fn time_bcast(x: &PredictionInput) -> f64 {
    let f = x.f();
    let c = &f.c;
    c.swap_block * 2.0 * f.v * f.mu / (f.p * f.k * f.bb)
        + c.delivery_block * f.v * f.omega / (f.p * f.d * f.bb)
        + net(c, f.omega)
        + c.net_superstep
        + c.virtual_superstep
}

/// S·(μ + ω)/(BD) + g·vω/(Pb) + l·v/P + L.
pub fn time_gather(x: &PredictionInput) -> f64 {
    let f = x.f();
    let c = &f.c;
    c.swap_block * (f.mu + f.omega) / (f.bb * f.d)
        + net(c, f.v * f.omega / f.p)
        + c.net_superstep * f.v / f.p
        + c.virtual_superstep
}

/// Local combining work: nv/(Pk) + nk.
pub fn reduce_compute_time(n: u64, v: u64, p: u64, k: u64) -> f64 {
    let (n, v, p, k) = (n as f64, v as f64, p as f64, k as f64);
    n * v / (p * k) + n * k
}

/// G·nε/B + g·nε·lgP/b + l·lgP + L, with ε the element width: the terms
/// priced by the cost parameters.
pub fn time_reduce(x: &PredictionInput) -> f64 {
    let f = x.f();
    let c = &f.c;
    c.delivery_block * f.n * f.eps / f.bb + net(c, f.n * f.eps * f.lgp) + c.net_superstep * f.lgp + c.virtual_superstep
}

/// [`time_reduce`] plus the combining work n·lgP + nv/(Pk) + nk, counted in
/// element operations.
pub fn time_reduce_total(x: &PredictionInput) -> f64 {
    time_reduce(x) + x.n as f64 * lg_ceil(x.p) as f64 + reduce_compute_time(x.n, x.v, x.p, x.k)
}

/// S·vμ/(BD) + G·(v² − vk)ω/(2BD) + G·2v²/D + L.
pub fn time_alltoallv_seq(x: &PredictionInput) -> f64 {
    let f = x.f();
    let c = &f.c;
    c.swap_block * f.v * f.mu / (f.bb * f.d)
        + c.delivery_block * (f.v * f.v - f.v * f.k) * f.omega / (2.0 * f.bb * f.d)
        + c.delivery_block * 2.0 * f.v * f.v / f.d
        + c.virtual_superstep
}

/// S·vμ/(PDB) + G·(v² − v²/(2P) − vk/2)ω/(PDB) + G·2v²/D + g·αkω/b + l·v²/(Pkα) + L.
///
/// The delivery coefficient is the corrected one from [`io_alltoallv_par`], so
/// with g = l = 0 this equals [`time_alltoallv_seq`] at P = 1.
pub fn time_alltoallv_par(x: &PredictionInput) -> f64 {
    let f = x.f();
    let c = &f.c;
    let coef = f.v * f.v - f.v * f.v / (2.0 * f.p) - f.v * f.k / 2.0;
    c.swap_block * f.v * f.mu / (f.p * f.d * f.bb)
        + c.delivery_block * coef * f.omega / (f.p * f.d * f.bb)
        + c.delivery_block * 2.0 * f.v * f.v / f.d
        + net(c, f.alpha * f.k * f.omega)
        + c.net_superstep * f.v * f.v / (f.p * f.k * f.alpha)
        + c.virtual_superstep
}

/// Indirect Alltoallv time: S·4μ/B + G·2v²⌈ω⌉/B + 2L.
pub fn time_pems1_alltoallv(x: &PredictionInput) -> f64 {
    let f = x.f();
    let c = &f.c;
    let w = block_ceil(x.omega, x.block) as f64;
    c.swap_block * 4.0 * f.mu / f.bb + c.delivery_block * 2.0 * f.v * f.v * w / f.bb + 2.0 * c.virtual_superstep
}
