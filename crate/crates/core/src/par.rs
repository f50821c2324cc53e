//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper produces bitwise-identical output whether it runs on the
//! rayon pool or sequentially: work is split into fixed-size blocks that do
//! not depend on the thread count, and partial results are always combined
//! left to right in block order.
//!
//! With the `parallel` feature disabled everything runs sequentially.
//! [`sequential`] forces the sequential path for the current thread, which
//! the benches use to compare both paths inside one build.

use std::cell::Cell;
use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Block length used by [`block_sum`]; part of the summation-order contract.
pub const SUM_BLOCK: usize = 64;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every helper in this module pinned to the sequential path.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    struct Reset(bool);
    impl Drop for Reset {
        fn drop(&mut self) {
            FORCE_SEQUENTIAL.with(|c| c.set(self.0));
        }
    }
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let _reset = Reset(prev);
    f()
}

/// Whether helpers called from this thread will use the rayon pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// `(0..n).map(f).collect()`, in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Applies `f` to every element of `items` in place.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
        return;
    }
    items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Sums `dim`-length contributions over `0..n`.
///
/// `add_block(range, acc)` must add the contributions of `range`, in order,
/// into the zero-initialised `acc`. Blocks are `SUM_BLOCK` long and their
/// partial sums are added left to right.
pub fn block_sum<F>(n: usize, dim: usize, add_block: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64]) + Sync + Send,
{
    let blocks = n.div_ceil(SUM_BLOCK);
    let block = |b: usize| {
        let mut acc = vec![0.0; dim];
        let start = b * SUM_BLOCK;
        add_block(start..(start + SUM_BLOCK).min(n), &mut acc);
        acc
    };
    let partials = map_range(blocks, block);
    let mut total = vec![0.0; dim];
    for p in &partials {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    total
}
