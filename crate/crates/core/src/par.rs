// SPDX-License-Identifier: MIT OR Apache-2.0
//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper preserves element order, and none of them performs a floating-point
//! reduction across threads, so results are bitwise identical for both strategies.

use crate::error::{Error, Result};

/// Environment variable that caps the worker pool size.
pub const THREADS_ENV: &str = "ANNULUS_ROTOR_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Evaluates `f(i)` for `i in 0..n` and collects the results in index order.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Applies `f(chunk_index, chunk)` to consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(exec: Exec, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Reads the thread cap from the environment and configures the global pool.
///
/// Returns the cap that was applied, if any.
pub fn init_threads_from_env() -> Result<Option<usize>> {
    let raw = match std::env::var(THREADS_ENV) {
        Ok(v) => v,
        Err(_) => return Ok(None),
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    #[cfg(feature = "parallel")]
    {
        // A second initialization (e.g. from tests) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(Some(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_is_ordered_for_both_strategies() {
        let a = map_range(Exec::Parallel, 1000, |i| (i as f64).sqrt());
        let b = map_range(Exec::Sequential, 1000, |i| (i as f64).sqrt());
        assert_eq!(a, b);
        assert_eq!(a[49], 7.0);
    }

    #[test]
    fn chunks_cover_everything() {
        let mut v = vec![0usize; 103];
        for_each_chunk_mut(Exec::Parallel, &mut v, 10, |k, c| {
            for (j, x) in c.iter_mut().enumerate() {
                *x = k * 10 + j;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| i == x));
    }
}
