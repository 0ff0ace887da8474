//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the helpers fan work out over the rayon pool
//! when asked to; without it they always run sequentially. Output order is
//! the input order either way, so callers stay deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether parallel execution is compiled in.
pub const fn available() -> bool {
    cfg!(feature = "parallel")
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, parallel: bool, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_both_ways() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map(&items, false, |x| x * x);
        let par = map(&items, true, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(map_range(10, true, |i| i), (0..10).collect::<Vec<_>>());
    }
}
