//! Order-preserving data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) an [`Executor`] with more than one
//! worker owns a dedicated rayon pool. With one worker, or with the feature
//! disabled, every map is a plain iterator loop. Results are always returned
//! in input order, so callers never observe scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Worker-count override read by the CLI and the pipeline.
pub const WORKERS_ENV: &str = "TEXFORGE_WORKERS";

pub struct Executor {
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    /// `workers` is clamped to at least one.
    pub fn new(workers: usize) -> Self {
        let workers = workers.max(1);
        #[cfg(feature = "parallel")]
        {
            let pool =
                if workers > 1 { rayon::ThreadPoolBuilder::new().num_threads(workers).build().ok() } else { None };
            Executor { workers, pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Executor { workers }
        }
    }

    pub fn sequential() -> Self {
        Self::new(1)
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// True when maps actually fan out across threads.
    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().map(f).collect());
        }
        items.iter().map(f).collect()
    }

    pub fn map_indexed<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(usize, &T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect());
        }
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }

    /// Map then fold each result into an accumulator. `merge` must be
    /// associative and `identity` its neutral element.
    pub fn map_reduce<T, A, F, M, I>(&self, items: &[T], identity: I, f: F, merge: M) -> A
    where
        T: Sync,
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(&T) -> A + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().map(&f).reduce(&identity, &merge));
        }
        items.iter().map(f).fold(identity(), merge)
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("workers", &self.workers).field("parallel", &self.is_parallel()).finish()
    }
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n >= 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_for_any_worker_count() {
        let items: Vec<u64> = (0..1000).collect();
        let expected: Vec<u64> = items.iter().map(|x| x * x).collect();
        for workers in [1, 2, 4, 7] {
            let exec = Executor::new(workers);
            assert_eq!(exec.map(&items, |x| x * x), expected);
        }
    }

    #[test]
    fn map_reduce_matches_sequential_sum() {
        let items: Vec<u64> = (1..=500).collect();
        for workers in [1, 3] {
            let exec = Executor::new(workers);
            let total = exec.map_reduce(&items, || 0u64, |x| *x, |a, b| a + b);
            assert_eq!(total, 500 * 501 / 2);
        }
    }

    #[test]
    fn zero_workers_is_clamped() {
        assert_eq!(Executor::new(0).workers(), 1);
        assert!(!Executor::new(1).is_parallel());
    }
}
