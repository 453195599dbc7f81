//! A single all-to-all over the whole data set.

use super::mix;
use crate::error::{Error, Result};
use crate::runtime::Vp;

#[derive(Clone, Debug, PartialEq)]
pub struct AlltoallVp {
    pub rho: usize,
    /// Seconds spent in the collective.
    pub seconds: f64,
    /// Every received element came from the expected sender and position.
    pub verified: bool,
}

/// Element `x` of the message from `src` to `dst`.
pub fn element(seed: u64, src: usize, dst: usize, x: usize) -> u32 {
    mix(seed ^ mix(((src as u64) << 42) ^ ((dst as u64) << 21) ^ x as u64)) as u32
}

/// Every pair exchanges `n / v²` 32-bit elements.
pub fn alltoall_bench(vp: &mut Vp<'_>, n: usize, seed: u64) -> Result<AlltoallVp> {
    let (v, rho) = (vp.size(), vp.rank());
    if n < v * v || !n.is_multiple_of(v * v) {
        return Err(Error::Usage(format!("n = {n} must be a positive multiple of v² = {}", v * v)));
    }
    let c = n / (v * v);
    let send = vp.alloc_array::<u32>(v * c)?;
    let recv = vp.alloc_array::<u32>(v * c)?;
    for (i, e) in vp.slice_mut::<u32>(send).iter_mut().enumerate() {
        *e = element(seed, rho, i / c, i % c);
    }
    vp.mark("Alltoallv Start");
    let t0 = vp.wtime();
    vp.alltoall(send, recv, 4 * c)?;
    let seconds = vp.wtime() - t0;
    vp.mark("Alltoallv End");
    let verified = vp.slice::<u32>(recv).iter().enumerate().all(|(i, &e)| e == element(seed, i / c, rho, i % c));
    Ok(AlltoallVp { rho, seconds, verified })
}
