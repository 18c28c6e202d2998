//! Order-preserving data parallelism with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] runs on the
//! rayon pool; without it, or with [`Execution::Sequential`], the same
//! closures run on the calling thread. Output order always follows input
//! order, so results never depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_ordered<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_ordered_init(items, exec, || (), |_, t| f(t))
}

/// Like [`map_ordered`] with a per-worker scratch value built by `init`.
pub fn map_ordered_init<T, R, S, I, F>(items: &[T], exec: Execution, init: I, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map_init(init, f).collect(),
        _ => {
            let mut scratch = init();
            items.iter().map(|t| f(&mut scratch, t)).collect()
        }
    }
}

/// Caps the global worker count. Returns `false` if the pool was already
/// initialized (or the crate was built without `parallel`).
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..10_000).collect();
        let par = map_ordered(&items, Execution::Parallel, |x| x * x);
        let seq = map_ordered(&items, Execution::Sequential, |x| x * x);
        assert_eq!(par, seq);
        assert_eq!(par[9999], 9999 * 9999);
    }
}
