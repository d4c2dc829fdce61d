//! Data-parallel map with a sequential fallback.
//!
//! Results are always returned in index order, so reductions over them are
//! independent of the scheduling.

/// How independent work items are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon work stealing when the `parallel` feature is enabled; otherwise
    /// the same as `Sequential`.
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run items concurrently.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// `(0..n).map(f)` under the chosen execution mode.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}
