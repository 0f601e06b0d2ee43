//! Thread-pool executor; `BARL_THREADS` caps the worker count (0 = auto).

use barl_core::Executor;
use rayon::prelude::*;

pub const THREADS_VAR: &str = "BARL_THREADS";

pub struct PoolExecutor {
    pool: rayon::ThreadPool,
}

impl PoolExecutor {
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        Self { pool }
    }

    /// Reads `BARL_THREADS`; unset, empty or unparsable means auto.
    pub fn from_env() -> Self {
        let threads = std::env::var(THREADS_VAR)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(0);
        Self::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for PoolExecutor {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
