//! Index-ordered parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) work runs on a rayon pool sized to
//! the requested job count; without it, or with `jobs <= 1`, it runs inline.
//! Results always come back in index order, so callers see identical output
//! regardless of scheduling.

/// Maps `f` over `0..n` using up to `jobs` worker threads.
pub fn map_indexed<T, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if jobs > 1 && n > 1 {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                Ok(pool) => return pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                Err(e) => log::warn!("falling back to sequential execution: {e}"),
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    (0..n).map(f).collect()
}

/// Whether this build can run work in parallel.
pub const fn enabled() -> bool {
    cfg!(feature = "parallel")
}

/// Default worker count: available hardware threads.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(100, 1, |i| i * i);
        let par = map_indexed(100, 8, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(par[7], 49);
        assert!(map_indexed(0, 4, |i| i).is_empty());
    }
}
