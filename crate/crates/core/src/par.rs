//! Data-parallel dispatch.
//!
//! With the `parallel` feature (default) these helpers fan work out over
//! rayon; without it they run the identical loop sequentially. Every call
//! site partitions output by index, so results are bit-identical in both
//! modes — parallelism never changes reduction order.

/// Apply `f` to each row of `out` (row length `row_len`), passing the row
/// index. Rows are disjoint, so this parallelizes without changing any
/// per-element accumulation order.
pub fn for_each_row<F>(out: &mut [f64], row_len: usize, min_rows_for_par: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert!(row_len > 0 && out.len() % row_len == 0);
    let n_rows = out.len() / row_len;
    #[cfg(feature = "parallel")]
    {
        if n_rows >= min_rows_for_par {
            use rayon::prelude::*;
            out.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
    }
    let _ = min_rows_for_par;
    for (i, row) in out.chunks_mut(row_len).enumerate() {
        f(i, row);
    }
}

/// Map `f` over `0..n`, collecting results in index order. Used for
/// job-level fan-out: grid points, permutations, seeds, test queries.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fallible variant of [`map_indexed`]: returns the first error by index.
pub fn try_map_indexed<R, E, F>(n: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    let results: Vec<Result<R, E>> = map_indexed(n, f);
    results.into_iter().collect()
}
