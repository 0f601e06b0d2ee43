//! Index-ordered map used for the embarrassingly parallel parts of the
//! algorithm. The std crate provides a thread-pool backed implementation.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluates `f(0..n)` and returns the results in index order.
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
