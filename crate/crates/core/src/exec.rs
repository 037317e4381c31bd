//! Data-parallel map with a sequential fallback.
//!
//! Results are collected by index, so the parallel and sequential paths produce
//! identical output for the same inputs. Without the `parallel` feature the
//! `parallel` flag is ignored and everything runs sequentially.

/// Maps `f` over `0..n`, in parallel when requested and compiled in. The thread
/// count is whatever rayon pool is installed at the call site.
pub fn indexed_map<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    (0..n).map(f).collect()
}
