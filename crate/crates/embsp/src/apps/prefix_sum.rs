//! Distributed inclusive prefix sums over 64-bit values.

use super::mix;
use crate::error::{Error, Result};
use crate::runtime::Vp;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Values {
    /// The whole global array.
    Given(Vec<u64>),
    /// Element `g` is a seeded hash of `g`, below 1000.
    Random(u64),
}

impl Values {
    pub fn get(&self, g: usize) -> u64 {
        match self {
            Values::Given(v) => v[g],
            Values::Random(seed) => mix(seed ^ mix(g as u64)) % 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PsumVp {
    pub rho: usize,
    /// Every local output equals the running total of the input.
    pub verified: bool,
    pub output: Option<Vec<u64>>,
}

/// Each VP scans its `n / v` elements, learns every VP's total through an
/// allgather and adds the totals of the lower-ranked VPs.
pub fn prefix_sum(vp: &mut Vp<'_>, n: usize, values: &Values, keep: bool) -> Result<PsumVp> {
    let (v, rho) = (vp.size(), vp.rank());
    if n < v || !n.is_multiple_of(v) {
        return Err(Error::Usage(format!("n = {n} must be a positive multiple of v = {v}")));
    }
    if let Values::Given(all) = values {
        if all.len() != n {
            return Err(Error::Usage(format!("{} values given for n = {n}", all.len())));
        }
    }
    let m = n / v;
    vp.mark("Init");
    let data = vp.alloc_array::<u64>(m)?;
    let mut acc = 0u64;
    for (i, x) in vp.slice_mut::<u64>(data).iter_mut().enumerate() {
        acc = acc.wrapping_add(values.get(rho * m + i));
        *x = acc;
    }
    vp.mark("Local Scan");
    let total = vp.alloc_array::<u64>(1)?;
    let totals = vp.alloc_array::<u64>(v)?;
    vp.slice_mut::<u64>(total)[0] = acc;
    vp.allgather(total, totals)?;
    let offset = vp.slice::<u64>(totals)[..rho].iter().fold(0u64, |a, &x| a.wrapping_add(x));
    for x in vp.slice_mut::<u64>(data) {
        *x = x.wrapping_add(offset);
    }
    vp.mark("Offset Added");

    let mut running = (0..rho * m).fold(0u64, |a, g| a.wrapping_add(values.get(g)));
    let mut verified = true;
    for (i, &x) in vp.slice::<u64>(data).iter().enumerate() {
        running = running.wrapping_add(values.get(rho * m + i));
        verified &= x == running;
    }
    let output = keep.then(|| vp.slice::<u64>(data).to_vec());
    Ok(PsumVp { rho, verified, output })
}
