//! Order-preserving parallel map over independent work items.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::Result;

pub const THREADS_ENV: &str = "BNDLESS_THREADS";

/// Worker count: `BNDLESS_THREADS` when set to a positive integer, else the
/// available parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count())
            .build()
            .expect("thread pool")
    })
}

/// `(0..n).map(f)` evaluated on the worker pool; results keep index order,
/// so output does not depend on scheduling.
pub fn par_map<R, F>(n: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync,
{
    if worker_count() <= 1 {
        return (0..n).map(f).collect();
    }
    pool().install(|| (0..n).into_par_iter().map(&f).collect())
}
