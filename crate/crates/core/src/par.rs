//! Index-ordered parallel map.
//!
//! With the `parallel` feature the work is spread over a rayon pool; without
//! it everything runs on the calling thread. Either way the output vector is
//! in index order, so reductions over it are independent of scheduling.

/// Worker-count hint. `None` uses the global rayon pool, `Some(1)` forces
/// the sequential path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Workers(pub Option<usize>);

impl Workers {
    pub const SEQUENTIAL: Workers = Workers(Some(1));

    pub fn new(n: usize) -> Self {
        Workers(Some(n.max(1)))
    }
}

pub fn map_indexed<T, F>(n: usize, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match workers.0 {
            Some(1) => (0..n).map(f).collect(),
            Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
                Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                Err(_) => (0..n).map(f).collect(),
            },
            None => (0..n).into_par_iter().map(f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        (0..n).map(f).collect()
    }
}

/// Fallible variant; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(n: usize, workers: Workers, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, workers, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_any_worker_count() {
        let seq = map_indexed(257, Workers::SEQUENTIAL, |i| i * i);
        for w in [Workers(None), Workers::new(2), Workers::new(8)] {
            assert_eq!(map_indexed(257, w, |i| i * i), seq);
        }
    }
}
