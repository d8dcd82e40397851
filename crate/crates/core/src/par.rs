//! Data-parallel map helpers with a sequential fallback.
//!
//! Callers hand over an index range or slice and receive a `Vec` in input
//! order, so reductions downstream run in a fixed order and results are
//! bitwise independent of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Map `f` over a slice, collecting results in input order.
#[cfg(feature = "parallel")]
pub fn map_slice<'a, I, T, F>(items: &'a [I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&'a I) -> T + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<'a, I, T, F>(items: &'a [I], f: F) -> Vec<T>
where
    F: Fn(&'a I) -> T,
{
    items.iter().map(f).collect()
}
