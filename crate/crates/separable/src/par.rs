//! Data-parallel helpers with a sequential fallback.
//!
//! Results are always collected in index order, so the output of a parallel
//! run is identical to the sequential one whenever the per-index work is
//! deterministic.

/// How index-parallel work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Use the rayon thread pool when the `parallel` feature is enabled,
    /// otherwise fall back to a plain loop.
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// True when this schedule will actually fan out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_indexed(Execution::Parallel, 1000, f);
        let b = map_indexed(Execution::Sequential, 1000, f);
        assert_eq!(a, b);
    }
}
