//! Deterministic parallel reductions.
//!
//! Work is split into fixed-size chunks whose partial results are combined
//! in chunk order, so sums are bit-identical for any thread count.

use rayon::prelude::*;

/// Chunk length used by every reduction in the crate.
pub const CHUNK: usize = 2048;

/// Maps each chunk `[start, end)` of `0..len` to a partial value and folds
/// the partials left to right.
pub fn chunked_reduce<T, M, F>(len: usize, init: T, map: M, fold: F) -> T
where
    T: Send,
    M: Fn(usize, usize) -> T + Sync,
    F: Fn(T, T) -> T,
{
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            map(start, (start + CHUNK).min(len))
        })
        .collect();
    partials.into_iter().fold(init, fold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_is_order_stable() {
        let data: Vec<f64> = (0..100_000).map(|i| ((i as f64) * 0.37).sin() * 1e-3 + 1.0 / (i + 1) as f64).collect();
        let sum = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| chunked_reduce(data.len(), 0.0, |a, b| data[a..b].iter().sum::<f64>(), |x, y| x + y))
        };
        assert_eq!(sum(1).to_bits(), sum(4).to_bits());
    }
}
