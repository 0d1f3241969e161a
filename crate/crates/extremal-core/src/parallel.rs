//! Data-parallel helpers with a sequential fallback.
//!
//! Batch work (dimension-sweep rows, estimate verification over branch
//! points) maps over independent items; with the `parallel` feature the map
//! runs on the rayon pool, otherwise it degrades to a plain iterator. Result
//! order is the input order either way.

#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Install a pool of the requested size for the duration of `f`.
/// `jobs = 0` keeps the default pool; without the `parallel` feature the
/// closure simply runs on the caller's thread.
#[cfg(feature = "parallel")]
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    if jobs == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("rayon pool");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<R>(jobs: usize, f: impl FnOnce() -> R) -> R {
    let _ = jobs;
    f()
}
