//! Parallel sorting by regular sampling over 32-bit keys.

use embsp_core::psrs::{bucket_bounds, merge_runs, pick_splitters, regular_samples, permute_u32};
use embsp_core::{MsgSpec, Region};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mix;
use crate::error::{Error, Result};
use crate::runtime::Vp;

/// Input keys; element `g` of the global array depends only on the seed and `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keys {
    /// Uniform 32-bit values, duplicates possible.
    Random(u64),
    /// Distinct values from a seeded permutation.
    Distinct(u64),
}

impl Keys {
    /// Elements `first..first + out.len()` of the global input.
    pub fn fill(self, first: usize, out: &mut [u32]) {
        match self {
            Keys::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_word_pos(first as u128);
                out.iter_mut().for_each(|x| *x = rng.next_u32());
            }
            Keys::Distinct(seed) => {
                for (i, x) in out.iter_mut().enumerate() {
                    *x = permute_u32(seed, (first + i) as u32);
                }
            }
        }
    }

    pub fn generate(self, n: usize) -> Vec<u32> {
        let mut v = vec![0; n];
        self.fill(0, &mut v);
        v
    }
}

/// What one VP reports after sorting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PsrsVp {
    pub rho: usize,
    /// Elements held after the exchange.
    pub count: usize,
    /// Largest message this VP sent, in bytes.
    pub max_message: usize,
    /// Largest element count held by any VP.
    pub max_count: usize,
    /// Global order, element count and multiset checks all held.
    pub verified: bool,
    pub output: Option<Vec<u32>>,
}

const RECORD: usize = 7;

/// Context bytes needed per VP for `n` keys: the input, the received buckets
/// and the merged output at the worst balance, plus samples and counts.
pub fn psrs_context_bytes(n: usize, v: usize, block: usize) -> usize {
    let m = n / v;
    let r = 2 * m + v;
    let bytes = 4 * (m + r).max(2 * r) + 4 * (v * v + 2 * v) + 8 * (2 * v + RECORD * (v + 1)) + 64 * 8;
    bytes.div_ceil(block) * block
}

fn checksum(keys: &[u32]) -> u64 {
    keys.iter().fold(0u64, |a, &x| a.wrapping_add(mix(x as u64)))
}

/// Sorts the `n` keys described by `keys`; each VP ends up with a sorted run
/// and every run is ≤ the next one. `keep` returns the run itself.
pub fn psrs(vp: &mut Vp<'_>, n: usize, keys: Keys, keep: bool) -> Result<PsrsVp> {
    let (v, rho) = (vp.size(), vp.rank());
    if n < v || !n.is_multiple_of(v) {
        return Err(Error::Usage(format!("n = {n} must be a positive multiple of v = {v}")));
    }
    let need = psrs_context_bytes(n, v, vp.config().block_size);
    if need > vp.mu() {
        return Err(Error::Usage(format!("sorting {n} keys needs μ ≥ {need} bytes, have {}", vp.mu())));
    }
    let m = n / v;
    vp.mark("Init");
    let data = vp.alloc_array::<u32>(m)?;
    keys.fill(rho * m, vp.slice_mut(data));
    let in_sum = checksum(vp.slice(data));

    vp.mark("Benchmark Start");
    vp.slice_mut::<u32>(data).sort_unstable();
    vp.mark("Finish Step 1");

    let sample = vp.alloc_array::<u32>(v)?;
    let picked = regular_samples(vp.slice::<u32>(data), v);
    vp.slice_mut(sample).copy_from_slice(&picked);
    let all = if rho == 0 { Some(vp.alloc_array::<u32>(v * v)?) } else { None };
    vp.mark("Gather Start");
    vp.gather(0, sample, all.unwrap_or(Region::new(0, 0)))?;
    vp.mark("Gather End");

    let split_alloc = vp.alloc_array::<u32>(v.max(2) - 1)?;
    let splitters = Region::new(split_alloc.offset, 4 * (v - 1));
    if let Some(all) = all {
        let s = vp.slice_mut::<u32>(all);
        s.sort_unstable();
        let chosen = pick_splitters(s, v);
        vp.slice_mut(splitters).copy_from_slice(&chosen);
        vp.free(all)?;
    }
    vp.bcast(0, splitters)?;
    vp.mark("Finish Step 2");

    let bounds = bucket_bounds(vp.slice::<u32>(data), vp.slice::<u32>(splitters));
    let counts = vp.alloc_array::<u64>(2 * v)?;
    let (sc, rc) = (Region::new(counts.offset, 8 * v), Region::new(counts.offset + 8 * v, 8 * v));
    for (j, c) in vp.slice_mut::<u64>(sc).iter_mut().enumerate() {
        *c = (bounds[j + 1] - bounds[j]) as u64;
    }
    vp.alltoall(sc, rc, 8)?;
    vp.mark("Finish Step 3");

    let incoming: Vec<usize> = vp.slice::<u64>(rc).iter().map(|&c| c as usize).collect();
    let r: usize = incoming.iter().sum();
    let inbox_alloc = vp.alloc(4 * r.max(1))?;
    let inbox = Region::new(inbox_alloc.offset, 4 * r);
    let send: Vec<Region> =
        (0..v).map(|j| Region::new(data.offset + 4 * bounds[j], 4 * (bounds[j + 1] - bounds[j]))).collect();
    let mut at = inbox.offset;
    let recv: Vec<Region> = incoming
        .iter()
        .map(|&c| {
            let reg = Region::new(at, 4 * c);
            at += 4 * c;
            reg
        })
        .collect();
    let max_message = send.iter().map(|s| s.len).max().unwrap_or(0);
    vp.mark("Alltoallv Start");
    vp.alltoallv(&MsgSpec::new(send, recv))?;
    vp.mark("Finish Step 4");

    for reg in [data, sample, split_alloc, counts] {
        vp.free(reg)?;
    }
    let out_alloc = vp.alloc(4 * r.max(1))?;
    let out = Region::new(out_alloc.offset, 4 * r);
    {
        let (src, dst) = vp.split::<u32>(inbox, out);
        let mut runs = Vec::with_capacity(v);
        let mut at = 0;
        for &c in &incoming {
            runs.push(&src[at..at + c]);
            at += c;
        }
        merge_runs(&runs, dst);
    }
    vp.free(inbox_alloc)?;
    vp.mark("Finish Step 5");

    let sorted = vp.slice::<u32>(out);
    let record = [
        r as u64,
        sorted.first().map_or(0, |&x| x as u64),
        sorted.last().map_or(0, |&x| x as u64),
        sorted.windows(2).all(|w| w[0] <= w[1]) as u64,
        in_sum,
        checksum(sorted),
        max_message as u64,
    ];
    let output = keep.then(|| sorted.to_vec());
    let mine = vp.alloc_array::<u64>(RECORD)?;
    let every = vp.alloc_array::<u64>(RECORD * v)?;
    vp.slice_mut(mine).copy_from_slice(&record);
    vp.allgather(mine, every)?;
    let recs: Vec<[u64; RECORD]> = vp.slice::<u64>(every).chunks_exact(RECORD).map(|c| c.try_into().unwrap()).collect();
    let total: u64 = recs.iter().map(|x| x[0]).sum();
    let in_all = recs.iter().fold(0u64, |a, x| a.wrapping_add(x[4]));
    let out_all = recs.iter().fold(0u64, |a, x| a.wrapping_add(x[5]));
    let nonempty: Vec<&[u64; RECORD]> = recs.iter().filter(|x| x[0] > 0).collect();
    let ordered = nonempty.windows(2).all(|w| w[0][2] <= w[1][1]);
    let verified = total == n as u64 && recs.iter().all(|x| x[3] == 1) && in_all == out_all && ordered;
    let max_count = recs.iter().map(|x| x[0] as usize).max().unwrap_or(0);
    vp.mark("Verified");
    Ok(PsrsVp { rho, count: r, max_message, max_count, verified, output })
}
