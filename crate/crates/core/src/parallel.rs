//! Thread pool shared by the parallel maps. `BOHM_SIM_THREADS` caps its size.

use std::sync::OnceLock;

pub const THREADS_ENV: &str = "BOHM_SIM_THREADS";

fn pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        let n: usize = std::env::var(THREADS_ENV).ok()?.trim().parse().ok()?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().ok()
    })
    .as_ref()
}

/// Runs `op` inside the capped pool when `BOHM_SIM_THREADS` is set, on the global pool otherwise.
pub fn install<R: Send>(op: impl FnOnce() -> R + Send) -> R {
    match pool() {
        Some(p) => p.install(op),
        None => op(),
    }
}

/// Number of worker threads a parallel map will use.
pub fn threads() -> usize {
    pool().map_or_else(rayon::current_num_threads, |p| p.current_num_threads())
}
