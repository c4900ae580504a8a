//! Deterministic parallel helpers.
//!
//! Every reduction over paths is split into fixed-size chunks whose partial
//! results are combined in chunk order, so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;

use crate::scalar::Real;

/// Rows per reduction chunk. Fixed per release: changing it changes bytes.
pub const CHUNK: usize = 1024;

/// Order-preserving parallel map over `0..n`.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Sum of `f(i)` over `0..n`, chunked and combined left to right.
pub fn sum_indices<R, F>(n: usize, f: F) -> R
where
    R: Real,
    F: Fn(usize) -> R + Sync + Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<R> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).fold(R::zero(), |acc, i| acc + f(i))
        })
        .collect();
    partials.into_iter().fold(R::zero(), |acc, x| acc + x)
}

/// Maximum of `f(i)` over `0..n` (`-inf` for empty input). Order-independent.
pub fn max_indices<R, F>(n: usize, f: F) -> R
where
    R: Real,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(f)
        .reduce(R::neg_infinity, |a, b| if b > a { b } else { a })
}

/// Vector-valued chunked sum: `acc(i, buf)` adds row `i`'s contribution into
/// a zeroed buffer of length `len`.
pub fn sum_vectors<R, F>(n: usize, len: usize, acc: F) -> Vec<R>
where
    R: Real,
    F: Fn(usize, &mut [R]) + Sync + Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<Vec<R>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut buf = vec![R::zero(); len];
            for i in lo..hi {
                acc(i, &mut buf);
            }
            buf
        })
        .collect();
    let mut out = vec![R::zero(); len];
    for p in partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_thread_count() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e-3 + 1.0 / (1.0 + i as f64);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sum_indices::<f64, _>(10_000, f));
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| sum_indices::<f64, _>(10_000, f));
        assert_eq!(single.to_bits(), many.to_bits());
    }

    #[test]
    fn vector_sum_and_max() {
        let v = sum_vectors::<f64, _>(3000, 2, |i, b| {
            b[0] += 1.0;
            b[1] += i as f64;
        });
        assert_eq!(v, vec![3000.0, (2999.0 * 3000.0) / 2.0]);
        assert_eq!(max_indices::<f64, _>(5, |i| i as f64), 4.0);
    }
}
