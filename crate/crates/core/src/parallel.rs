//! Work pool sizing and order-preserving parallel maps.

use rayon::prelude::*;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "HYPOTUBE_THREADS";

/// Worker count: the request (or the machine's parallelism) capped by `HYPOTUBE_THREADS`.
pub fn worker_count(requested: Option<usize>) -> usize {
    let base = requested
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    cap.map_or(base, |c| base.min(c))
}

/// `(0..n).map(f)` evaluated on a dedicated pool; output order is the index order, so
/// results do not depend on scheduling.
pub fn map_indexed<T, F>(threads: Option<usize>, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let workers = worker_count(threads);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}
