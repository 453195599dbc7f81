//! Pure steps of parallel sorting by regular sampling.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Reverse;

/// `count` equally spaced samples of a sorted run: positions `i * len / count`.
pub fn regular_samples<T: Copy>(sorted: &[T], count: usize) -> Vec<T> {
    if sorted.is_empty() {
        return Vec::new();
    }
    (0..count).map(|i| sorted[i * sorted.len() / count]).collect()
}

/// Picks the `v - 1` global splitters at positions `v, 2v, …, (v-1)v` of the sorted samples.
pub fn pick_splitters<T: Copy>(sorted_samples: &[T], v: usize) -> Vec<T> {
    (1..v).filter_map(|i| sorted_samples.get(i * v).copied()).collect()
}

/// Bucket boundaries of a sorted run: bucket `j` is `bounds[j]..bounds[j + 1]`.
///
/// An element equal to splitter `j` goes to bucket `j`, the lower of the two candidates.
pub fn bucket_bounds<T: Ord>(sorted: &[T], splitters: &[T]) -> Vec<usize> {
    let mut bounds = Vec::with_capacity(splitters.len() + 2);
    bounds.push(0);
    for s in splitters {
        let at = sorted.partition_point(|x| x <= s);
        bounds.push(at.max(*bounds.last().unwrap()));
    }
    bounds.push(sorted.len());
    bounds
}

/// Merges sorted runs into `out`, which must hold exactly their total length.
pub fn merge_runs<T: Ord + Copy>(runs: &[&[T]], out: &mut [T]) {
    assert_eq!(out.len(), runs.iter().map(|r| r.len()).sum::<usize>(), "merge output size mismatch");
    let mut heap: BinaryHeap<Reverse<(T, usize)>> = BinaryHeap::with_capacity(runs.len());
    let mut pos = alloc::vec![0usize; runs.len()];
    for (i, r) in runs.iter().enumerate() {
        if let Some(&x) = r.first() {
            heap.push(Reverse((x, i)));
        }
    }
    let mut k = 0;
    while let Some(Reverse((x, i))) = heap.pop() {
        out[k] = x;
        k += 1;
        pos[i] += 1;
        if let Some(&y) = runs[i].get(pos[i]) {
            heap.push(Reverse((y, i)));
        }
    }
}

/// A seeded permutation of the 32-bit integers (a four-round Feistel network),
/// used to produce distinct keys.
pub fn permute_u32(key: u64, x: u32) -> u32 {
    let mut l = (x >> 16) as u16;
    let mut r = x as u16;
    for round in 0..4u64 {
        let k = key.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(round.wrapping_mul(0xBF58_476D_1CE4_E5B9));
        let mut h = (r as u64) ^ k;
        h = (h ^ (h >> 31)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 29;
        let f = h as u16;
        let next = l ^ f;
        l = r;
        r = next;
    }
    ((l as u32) << 16) | r as u32
}
