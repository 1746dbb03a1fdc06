//! Data-parallel helpers.
//!
//! Every parallel loop in the crate goes through [`map_range`], which keeps
//! results in index order. Randomness inside a loop body must come from
//! [`stream_rng`] keyed by the item index, so output is identical whether the
//! loop runs on one thread or many.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How data-parallel loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecPolicy {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise sequential.
    Parallel,
}

impl Default for ExecPolicy {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecPolicy::Parallel
        } else {
            ExecPolicy::Sequential
        }
    }
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_range<T, F>(exec: ExecPolicy, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        ExecPolicy::Sequential => (0..n).map(f).collect(),
        ExecPolicy::Parallel => parallel_map(n, f),
    }
}

/// Like [`map_range`] but stops at the first error (in index order).
pub fn try_map_range<T, E, F>(exec: ExecPolicy, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_range(exec, n, f).into_iter().collect()
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Independent RNG stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| {
            let mut rng = stream_rng(11, i as u64);
            rng.random::<f64>() + i as f64
        };
        let a = map_range(ExecPolicy::Sequential, 257, f);
        let b = map_range(ExecPolicy::Parallel, 257, f);
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let a: u64 = stream_rng(3, 0).random();
        let b: u64 = stream_rng(3, 1).random();
        assert_ne!(a, b);
    }
}
