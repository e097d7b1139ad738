//! Data-parallel loops with a sequential fallback.
//!
//! With the `parallel` feature (the default) the `map_indexed` /
//! `for_each_chunk_mut` entry points fan work out over rayon; without it
//! they run plain loops. Both paths produce identical results: each item
//! writes only its own output slot and any floating-point reduction is
//! performed in index order after the parallel section.
//!
//! The `*_seq` variants are always compiled (they are the fallback bodies)
//! and the `*_par` variants exist when `parallel` is enabled, so the
//! criterion bench suite can compare both strategies in a single build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map every item of `items` to a new value, preserving input order.
pub fn map_indexed<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    {
        map_indexed_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(items, f)
    }
}

/// Sequential body of [`map_indexed`].
pub fn map_indexed_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Rayon body of [`map_indexed`].
#[cfg(feature = "parallel")]
pub fn map_indexed_par<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Apply `f` to consecutive disjoint chunks of `data` (for example the rows
/// of a row-major matrix). `data.len()` must be a multiple of `chunk`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        for_each_chunk_mut_par(data, chunk, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        for_each_chunk_mut_seq(data, chunk, f)
    }
}

/// Sequential body of [`for_each_chunk_mut`].
pub fn for_each_chunk_mut_seq<T, F>(data: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    debug_assert_eq!(data.len() % chunk.max(1), 0);
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

/// Rayon body of [`for_each_chunk_mut`].
#[cfg(feature = "parallel")]
pub fn for_each_chunk_mut_par<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert_eq!(data.len() % chunk.max(1), 0);
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Map indices `0..n` to values, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_range_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_range_seq(n, f)
    }
}

/// Sequential body of [`map_range`].
pub fn map_range_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Rayon body of [`map_range`].
#[cfg(feature = "parallel")]
pub fn map_range_par<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Fallible version of [`map_indexed`]; returns the first error in index order.
pub fn try_map_indexed<T, R, E, F>(items: &[T], f: F) -> std::result::Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> std::result::Result<R, E> + Sync,
{
    let results = map_indexed(items, f);
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        let out = map_indexed(&items, |i, v| i as u64 + v);
        let expected = map_indexed_seq(&items, |i, v| i as u64 + v);
        assert_eq!(out, expected);
    }

    #[test]
    fn chunked_mutation_is_disjoint() {
        let mut data = vec![0usize; 12];
        for_each_chunk_mut(&mut data, 3, |i, c| c.iter_mut().for_each(|v| *v = i));
        assert_eq!(data, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
    }

    #[test]
    fn try_map_surfaces_first_error() {
        let items = vec![1, 2, 3, 4];
        let r: Result<Vec<i32>, String> = try_map_indexed(&items, |_, v| {
            if *v == 3 {
                Err("three".to_string())
            } else {
                Ok(*v)
            }
        });
        assert_eq!(r, Err("three".to_string()));
    }
}
