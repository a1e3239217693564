//! Running independent fits (seeds, λ grid points) sequentially or on a
//! rayon pool.
//!
//! Results always come back in input order, so aggregation does not depend on
//! completion order. Without the `parallel` feature every mode runs
//! sequentially.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Execution {
    Sequential,
    /// Global rayon pool.
    #[default]
    Parallel,
    Workers { count: usize },
}

impl Execution {
    pub fn with_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(1) => Execution::Sequential,
            Some(count) => Execution::Workers { count },
            None => Execution::Parallel,
        }
    }

    /// Maps `f` over `items`, returning results in input order. The first
    /// error (in input order) aborts the batch.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R> + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Parallel => parallel_map(items, f, None),
            Execution::Workers { count } => parallel_map(items, f, Some(*count)),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], f: F, workers: Option<usize>) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    use rayon::prelude::*;

    let run = || items.par_iter().map(&f).collect::<Vec<_>>();
    let results = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| crate::error::FitError::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], f: F, _workers: Option<usize>) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::FitError;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..64).rev().collect();
        for exec in [Execution::Sequential, Execution::Parallel, Execution::Workers { count: 3 }] {
            let out = exec.map(&items, |x| Ok(x * 2)).unwrap();
            assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn first_error_in_input_order_wins() {
        let items: Vec<usize> = (0..20).collect();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let err = exec
                .map(&items, |&x| {
                    if x % 7 == 3 {
                        Err(FitError::NonConvergence(x))
                    } else {
                        Ok(x)
                    }
                })
                .unwrap_err();
            assert!(matches!(err, FitError::NonConvergence(3)));
        }
    }

    #[test]
    fn worker_shorthand() {
        assert_eq!(Execution::with_workers(Some(1)), Execution::Sequential);
        assert_eq!(Execution::with_workers(None), Execution::Parallel);
        assert_eq!(Execution::with_workers(Some(4)), Execution::Workers { count: 4 });
    }
}
