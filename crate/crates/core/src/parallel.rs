//! Deterministic parallel reductions.
//!
//! Work is split into fixed-size index chunks. Each chunk accumulates into its
//! own buffer and the buffers are added in chunk order, so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;
use std::ops::Range;

use crate::error::Result;

pub(crate) const CHUNK: usize = 256;
/// Chunks evaluated concurrently before their buffers are folded in, which
/// bounds memory for wide accumulators.
const GROUP: usize = 32;

/// Sums per-item contributions of width `width` over `0..len`.
///
/// `f(range, acc)` must add the contributions of every index in `range` to `acc`.
pub(crate) fn chunked_sum<F>(len: usize, width: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(Range<usize>, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let mut total = vec![0.0; width];
    for group in (0..chunks).step_by(GROUP) {
        let partials: Vec<Result<Vec<f64>>> = (group..(group + GROUP).min(chunks))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; width];
                f(c * CHUNK..((c + 1) * CHUNK).min(len), &mut acc)?;
                Ok(acc)
            })
            .collect();
        for partial in partials {
            for (t, p) in total.iter_mut().zip(partial?) {
                *t += p;
            }
        }
    }
    Ok(total)
}
