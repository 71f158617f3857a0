//! Data-parallel map helpers. With the `parallel` feature (default) the work
//! is spread over rayon; without it everything runs sequentially. Results are
//! collected by index, so output order never depends on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the feature is enabled.
pub fn par_map_idx<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Always-sequential map over `0..n`; the baseline the benchmarks compare
/// against and the fallback semantics of `par_map_idx` without the feature.
pub fn seq_map_idx<R>(n: usize, f: impl Fn(usize) -> R) -> Vec<R> {
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i * i) as u64;
        assert_eq!(par_map_idx(100, f), seq_map_idx(100, f));
    }
}
