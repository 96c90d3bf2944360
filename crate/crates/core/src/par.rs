use rayon::prelude::*;

/// Maps `f` over `items` on at most `workers` threads, keeping input order.
/// Stops at the first error in input order.
pub(crate) fn try_map<T, U, E, F>(items: &[T], workers: usize, f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<U, E>> = pool.install(|| items.par_iter().map(&f).collect());
    results.into_iter().collect()
}
