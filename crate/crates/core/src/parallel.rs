//! Thread-pool selection for the embarrassingly parallel loops.
//!
//! `FDRIDGE_THREADS` caps the worker count; unset or unparsable values fall
//! back to rayon's global pool. Results never depend on the thread count:
//! callers collect per-item outputs and reduce them in item order.

use rayon::prelude::*;

pub const THREADS_ENV: &str = "FDRIDGE_THREADS";

fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Maps `f` over `0..count` in parallel, returning results in index order.
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let run = || (0..count).into_par_iter().map(&f).collect::<Vec<T>>();
    match configured_threads() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}
