//! Parallel LSD radix sort of `(key, value)` pairs and per-tile range lookup.
//!
//! Keys are sorted with 8-bit digits. Only the low 32 depth bits and as many
//! tile bytes as the grid needs are visited, and a pass whose digit is the same
//! for every key is skipped. Equal keys end up ordered by value so the output
//! does not depend on emission order.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::shared::SharedSlice;

const RADIX: usize = 256;
/// Below this many pairs a single worker sorts.
const PARALLEL_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Default)]
pub struct SortScratch {
    keys: Vec<u64>,
    values: Vec<u32>,
    hist: Vec<[usize; RADIX]>,
}

/// Number of bytes of the key that can be non-zero when tiles are `< tile_count`.
pub fn key_bytes(tile_count: u32) -> u32 {
    let tile_bits = 32 - tile_count.saturating_sub(1).leading_zeros();
    4 + tile_bits.div_ceil(8)
}

/// Sorts `keys` ascending, carrying `values` along; equal keys are ordered by value.
pub fn sort_pairs(keys: &mut [u64], values: &mut [u32], tile_count: u32, scratch: &mut SortScratch) {
    assert_eq!(keys.len(), values.len());
    let n = keys.len();
    if n < 2 {
        return;
    }
    let workers = if n < PARALLEL_THRESHOLD {
        1
    } else {
        rayon::current_num_threads().max(1)
    };
    let chunk = n.div_ceil(workers);
    scratch.keys.resize(n, 0);
    scratch.values.resize(n, 0);
    scratch.hist.resize(workers, [0; RADIX]);

    let mut in_scratch = false;
    for byte in 0..key_bytes(tile_count) {
        let shift = 8 * byte;
        let (src_k, src_v, dst_k, dst_v): (&[u64], &[u32], &mut [u64], &mut [u32]) = if in_scratch {
            (&scratch.keys[..n], &scratch.values[..n], &mut *keys, &mut *values)
        } else {
            (&*keys, &*values, &mut scratch.keys[..n], &mut scratch.values[..n])
        };
        let hist = &mut scratch.hist[..workers];
        hist.par_iter_mut()
            .zip(src_k.par_chunks(chunk))
            .for_each(|(h, ks)| {
                *h = [0; RADIX];
                for k in ks {
                    h[((k >> shift) & 0xff) as usize] += 1;
                }
            });

        let mut totals = [0usize; RADIX];
        for h in hist.iter() {
            for (t, c) in totals.iter_mut().zip(h) {
                *t += c;
            }
        }
        if totals.contains(&n) {
            continue;
        }
        // Exclusive offsets: digit-major, then worker order, which keeps the scatter stable.
        let mut base = 0;
        for d in 0..RADIX {
            for h in hist.iter_mut() {
                let c = h[d];
                h[d] = base;
                base += c;
            }
        }

        let out_k = SharedSlice::new(dst_k);
        let out_v = SharedSlice::new(dst_v);
        hist.par_iter_mut()
            .zip(src_k.par_chunks(chunk).zip(src_v.par_chunks(chunk)))
            .for_each(|(offsets, (ks, vs))| {
                for (&k, &v) in ks.iter().zip(vs) {
                    let d = ((k >> shift) & 0xff) as usize;
                    // SAFETY: worker-private offset ranges per digit are disjoint.
                    unsafe {
                        out_k.write(offsets[d], k);
                        out_v.write(offsets[d], v);
                    }
                    offsets[d] += 1;
                }
            });
        in_scratch = !in_scratch;
    }
    if in_scratch {
        keys.copy_from_slice(&scratch.keys[..n]);
        values.copy_from_slice(&scratch.values[..n]);
    }
    order_equal_keys(keys, values);
}

fn order_equal_keys(keys: &[u64], values: &mut [u32]) {
    let mut start = 0;
    for i in 1..=keys.len() {
        if i == keys.len() || keys[i] != keys[start] {
            if i - start > 1 {
                values[start..i].sort_unstable();
            }
            start = i;
        }
    }
}

/// Half-open range of pair indices for every tile, empty for tiles without pairs.
pub fn tile_ranges(keys: &[u64], tile_count: u32, out: &mut Vec<Range<usize>>) -> Result<()> {
    out.clear();
    out.resize(tile_count as usize, 0..0);
    if let Some(i) = (1..keys.len()).find(|&i| keys[i - 1] > keys[i]) {
        return Err(Error::UnsortedPairs { index: i });
    }
    let mut start = 0;
    for i in 1..=keys.len() {
        if i == keys.len() || keys[i] >> 32 != keys[start] >> 32 {
            let tile = (keys[start] >> 32) as usize;
            if tile >= out.len() {
                return Err(Error::InvalidArgument(format!(
                    "pair {start} refers to tile {tile} of {tile_count}"
                )));
            }
            out[tile] = start..i;
            start = i;
        }
    }
    Ok(())
}
