//! Trial-level data parallelism.
//!
//! With the `parallel` feature (on by default) trials run on the rayon pool;
//! without it they run in order on the calling thread. Either way the result
//! is identical, because each trial derives its own RNG from its index and
//! results are returned in index order.

/// Runs `f(0..trials)` and returns the results in index order.
pub fn map_trials<T, F>(trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..trials).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..trials).map(f).collect()
    }
}

/// Counts, for each trial, which of `bins` bins `f` lands in.
///
/// Integer merging keeps the outcome independent of scheduling.
pub fn histogram_trials<F>(trials: usize, bins: usize, f: F) -> Vec<u64>
where
    F: Fn(usize) -> usize + Sync + Send,
{
    let add = |mut acc: Vec<u64>, b: usize| {
        acc[b] += 1;
        acc
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..trials)
            .into_par_iter()
            .map(f)
            .fold(|| vec![0u64; bins], add)
            .reduce(
                || vec![0u64; bins],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..trials).map(f).fold(vec![0u64; bins], add)
    }
}

/// Runs `f` with at most `threads` workers. A no-op wrapper without the
/// `parallel` feature.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Number of workers trial loops will use.
pub fn worker_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v = map_trials(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn histogram_counts_every_trial() {
        let h = histogram_trials(1001, 3, |i| i % 3);
        assert_eq!(h, vec![334, 334, 333]);
        let single = with_threads(1, || histogram_trials(1001, 3, |i| i % 3));
        assert_eq!(h, single);
    }
}
