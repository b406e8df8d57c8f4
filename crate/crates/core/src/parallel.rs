//! Index-ordered map that optionally fans out over a rayon pool.

/// Evaluates `f(0..n)` and returns results in index order. With `jobs > 1`
/// and the `parallel` feature, runs on a dedicated pool of `jobs` threads.
pub fn map_indexed<R, F>(n: usize, jobs: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    if jobs > 1 && n > 1 {
        use rayon::prelude::*;
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = jobs;
    (0..n).map(f).collect()
}
