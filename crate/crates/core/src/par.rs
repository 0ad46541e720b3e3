//! Data-parallel helpers.
//!
//! With the `parallel` feature (the default) these fan out over the rayon
//! global pool; without it they run as plain sequential loops. Both paths
//! preserve input order so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, keeping order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over `0..n`, keeping order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Folds chunks of `items` into partial accumulators and merges them.
pub fn fold_chunks<T, A, F, M>(items: &[T], chunk: usize, init: A, fold: F, merge: M) -> A
where
    T: Sync,
    A: Send + Sync + Clone,
    F: Fn(A, &[T]) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        items
            .par_chunks(chunk)
            .map(|c| fold(init.clone(), c))
            .reduce(|| init.clone(), &merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        items
            .chunks(chunk)
            .map(|c| fold(init.clone(), c))
            .fold(init.clone(), &merge)
    }
}

/// Runs `f` on a pool with `workers` threads; 0 keeps the global pool.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

/// True when compiled with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
