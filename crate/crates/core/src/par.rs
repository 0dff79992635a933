//! Order-preserving maps over independent work items, run on a rayon pool
//! when the `parallel` feature is enabled and sequentially otherwise.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// Use `threads` workers, or rayon's default when `None`.
    #[default]
    Parallel,
    Threads(usize),
}

impl Parallelism {
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Parallelism::Sequential,
            Some(n) => Parallelism::Threads(n),
            None => Parallelism::Parallel,
        }
    }
}

/// `items.map(f)` with results in input order, independent of scheduling.
pub fn ordered_map<T, R, F>(items: &[T], par: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match par {
        Parallelism::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        Parallelism::Threads(n) => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(_) => items.iter().map(f).collect(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        _ => items.iter().map(f).collect(),
    }
}

/// `(0..n).map(f)` with results in index order.
pub fn ordered_map_range<R, F>(n: usize, par: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    ordered_map(&idx, par, |&i| f(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v: Vec<u64> = (0..10_000).collect();
        let seq = ordered_map(&v, Parallelism::Sequential, |x| x * x);
        for p in [Parallelism::Parallel, Parallelism::Threads(4)] {
            assert_eq!(ordered_map(&v, p, |x| x * x), seq);
        }
        assert_eq!(ordered_map_range(5, Parallelism::Threads(3), |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
