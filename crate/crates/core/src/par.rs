//! Index-ordered parallel map with a sequential fallback.

/// Evaluates `f(0..n)` and returns the results in index order.
///
/// `jobs == Some(1)` always runs on the calling thread. Other values cap the
/// worker count when the `parallel` feature is enabled and are ignored
/// otherwise.
pub fn map_indexed<T, F>(n: usize, jobs: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if n <= 1 || jobs == Some(1) {
        return (0..n).map(f).collect();
    }
    parallel_map(n, jobs, f)
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, jobs: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..n).into_par_iter().map(&f).collect();
    match jobs {
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("could not build a {j}-thread pool ({e}); using the global pool");
                run()
            }
        },
        None => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, _jobs: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
