//! Sequential or data-parallel evaluation of independent work items.
//!
//! Results always come back in index order, so any reduction done by the
//! caller is identical for every execution mode.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    /// Rayon pool with the given number of threads; `0` means the global pool.
    Parallel {
        workers: usize,
    },
    #[default]
    Auto,
}

impl Execution {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            None => Execution::Auto,
            Some(1) => Execution::Sequential,
            Some(w) => Execution::Parallel { workers: w },
        }
    }

    /// Maps `f` over `0..count`, returning results in index order.
    pub fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self.resolve() {
            Execution::Sequential => (0..count).map(f).collect(),
            Execution::Parallel { workers } => par_map(count, workers, f),
            Execution::Auto => unreachable!(),
        }
    }

    fn resolve(self) -> Execution {
        if !cfg!(feature = "parallel") {
            return Execution::Sequential;
        }
        match self {
            Execution::Auto => Execution::Parallel { workers: 0 },
            other => other,
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(count: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..count).into_par_iter().map(&f).collect();
    if workers == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(run),
        Err(_) => (0..count).map(&f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(count: usize, _workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_in_order() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let seq = Execution::Sequential.map(1000, f);
        for exec in [
            Execution::Auto,
            Execution::Parallel { workers: 0 },
            Execution::Parallel { workers: 3 },
        ] {
            assert_eq!(exec.map(1000, f), seq);
        }
        assert!(Execution::Sequential.map(0, f).is_empty());
    }

    #[test]
    fn worker_flag_mapping() {
        assert_eq!(Execution::from_workers(None), Execution::Auto);
        assert_eq!(Execution::from_workers(Some(1)), Execution::Sequential);
        assert_eq!(
            Execution::from_workers(Some(4)),
            Execution::Parallel { workers: 4 }
        );
    }
}
