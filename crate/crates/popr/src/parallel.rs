//! Data-parallel map with a sequential fallback.
//!
//! With the default `parallel` feature the workload fans out over rayon;
//! without it the same call sites run a plain iterator. Results are identical
//! either way because every worker derives its randomness from pre-split
//! seeds, never from shared state.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    items.iter().map(f).collect()
}

/// Cap the worker pool from the `POPR_THREADS` environment variable.
///
/// Call once at startup. Does nothing if the variable is unset or invalid,
/// if the global pool was already built, or if the crate was compiled
/// without the `parallel` feature.
pub fn init_thread_cap_from_env() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(value) = std::env::var("POPR_THREADS") {
            match value.parse::<usize>() {
                Ok(n) if n > 0 => {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
                _ => log::warn!("ignoring invalid POPR_THREADS value: {value}"),
            }
        }
    }
}
