//! Trial execution for Monte Carlo harnesses.
//!
//! Trials are indexed `0..trials` and every trial derives its own randomness
//! from its index, so results never depend on scheduling. Reductions used
//! here are integer counts, which makes parallel and sequential runs agree
//! bit for bit.

use crate::error::Result;

/// How to run a batch of independent trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is on; otherwise the
    /// same as `Sequential`.
    #[default]
    Parallel,
}

/// Maps each trial index and folds the results with an associative,
/// commutative `reduce`.
pub fn map_reduce<T, M, R>(
    trials: u64,
    exec: Execution,
    identity: T,
    map: M,
    reduce: R,
) -> Result<T>
where
    T: Send + Sync + Clone,
    M: Fn(u64) -> Result<T> + Sync + Send,
    R: Fn(T, T) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..trials)
                .into_par_iter()
                .map(&map)
                .try_reduce(|| identity.clone(), |a, b| Ok(reduce(a, b)))
        }
        _ => {
            let mut acc = identity;
            for t in 0..trials {
                acc = reduce(acc, map(t)?);
            }
            Ok(acc)
        }
    }
}

/// Number of trials for which `pred` holds.
pub fn count_where<P>(trials: u64, exec: Execution, pred: P) -> Result<u64>
where
    P: Fn(u64) -> Result<bool> + Sync + Send,
{
    map_reduce(trials, exec, 0u64, |t| pred(t).map(u64::from), |a, b| a + b)
}

/// Histogram of `bins` buckets over the item each trial returns.
pub fn histogram<F>(bins: usize, trials: u64, exec: Execution, item: F) -> Result<Vec<u64>>
where
    F: Fn(u64) -> Result<usize> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return (0..trials)
            .into_par_iter()
            .try_fold(
                || vec![0u64; bins],
                |mut acc, t| {
                    acc[item(t)?] += 1;
                    Ok(acc)
                },
            )
            .try_reduce(
                || vec![0u64; bins],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    Ok(a)
                },
            );
    }
    let _ = exec;
    let mut acc = vec![0u64; bins];
    for t in 0..trials {
        acc[item(t)?] += 1;
    }
    Ok(acc)
}

/// Empirical distribution from histogram counts.
pub fn normalize_counts(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| c as f64 / total.max(1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CouplingError;

    #[test]
    fn sequential_and_parallel_agree() {
        let f = |t: u64| Ok(t.is_multiple_of(3));
        let a = count_where(10_000, Execution::Sequential, f).unwrap();
        let b = count_where(10_000, Execution::Parallel, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 3334);
        let h1 = histogram(4, 1000, Execution::Sequential, |t| Ok((t % 4) as usize)).unwrap();
        let h2 = histogram(4, 1000, Execution::Parallel, |t| Ok((t % 4) as usize)).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(h1, vec![250; 4]);
    }

    #[test]
    fn errors_propagate() {
        let r = count_where(100, Execution::Parallel, |t| {
            if t == 42 {
                Err(CouplingError::ScanCapExceeded { cap: 1 })
            } else {
                Ok(true)
            }
        });
        assert!(r.is_err());
    }
}
