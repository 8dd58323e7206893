//! Thread-count policy for the parallel scans.

use std::num::NonZeroUsize;

/// Environment variable capping scan parallelism.
pub const THREADS_ENV: &str = "DVHN_THREADS";

/// Hardware parallelism capped by `DVHN_THREADS` when it holds a positive integer.
pub fn max_threads() -> usize {
    let hw = std::thread::available_parallelism().map_or(1, NonZeroUsize::get);
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n > 0 => n.min(hw),
        _ => hw,
    }
}

/// Runs `f` inside a dedicated rayon pool of `threads` workers.
pub fn with_threads<R, F>(threads: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
