//! Data-parallel loop helpers. With the `parallel` feature enabled these
//! dispatch to rayon when `parallel` is true at runtime; the sequential path
//! is the same code that is compiled when the feature is off. Every reduction
//! used here is associative and commutative or re-ordered deterministically
//! by the caller, so results are identical for any worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum items per rayon job; keeps small populations on one thread.
const CHUNK: usize = 256;

pub(crate) fn map_collect<T: Sync, R: Send, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items
            .par_iter()
            .with_min_len(CHUNK)
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect();
    }
    let _ = parallel;
    items.iter().enumerate().map(|(i, item)| f(i, item)).collect()
}

pub(crate) fn fill_indexed<R: Send + Default + Clone, F>(len: usize, parallel: bool, f: F) -> Vec<R>
where
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return (0..len).into_par_iter().with_min_len(CHUNK).map(f).collect();
    }
    let _ = parallel;
    (0..len).map(f).collect()
}

/// Read-only fold+merge over a slice. `merge` must be associative and, for
/// bit-deterministic results, commutative (min/max/sum of integers).
pub(crate) fn fold_ref<T, A, Fold, Merge, Init>(
    items: &[T],
    parallel: bool,
    init: Init,
    fold: Fold,
    merge: Merge,
) -> A
where
    T: Sync,
    A: Send,
    Init: Fn() -> A + Send + Sync,
    Fold: Fn(A, usize, &T) -> A + Send + Sync,
    Merge: Fn(A, A) -> A + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items
            .par_iter()
            .with_min_len(CHUNK)
            .enumerate()
            .fold(&init, |acc, (i, item)| fold(acc, i, item))
            .reduce(&init, merge);
    }
    let _ = &merge;
    let _ = parallel;
    let mut acc = init();
    for (i, item) in items.iter().enumerate() {
        acc = fold(acc, i, item);
    }
    acc
}

/// Chunked fold+merge. `merge` must be associative; callers that need a fixed
/// order must sort afterwards.
pub(crate) fn fold_slices<T, A, Fold, Merge, Init>(
    items: &mut [T],
    parallel: bool,
    init: Init,
    fold: Fold,
    merge: Merge,
) -> A
where
    T: Send,
    A: Send,
    Init: Fn() -> A + Send + Sync,
    Fold: Fn(A, usize, &mut T) -> A + Send + Sync,
    Merge: Fn(A, A) -> A + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items
            .par_iter_mut()
            .with_min_len(CHUNK)
            .enumerate()
            .fold(&init, |acc, (i, item)| fold(acc, i, item))
            .reduce(&init, merge);
    }
    let _ = &merge;
    let _ = parallel;
    let mut acc = init();
    for (i, item) in items.iter_mut().enumerate() {
        acc = fold(acc, i, item);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_matches_sequential() {
        let mut a: Vec<u64> = (0..10_000).collect();
        let mut b = a.clone();
        let sum_seq = fold_slices(&mut a, false, || 0u64, |acc, i, v| acc + *v + i as u64, |x, y| x + y);
        let sum_par = fold_slices(&mut b, true, || 0u64, |acc, i, v| acc + *v + i as u64, |x, y| x + y);
        assert_eq!(sum_seq, sum_par);
    }

    #[test]
    fn map_collect_preserves_order() {
        let items: Vec<u32> = (0..5000).collect();
        let out = map_collect(&items, true, |i, v| (i as u32) * 2 + v);
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, (i as u32) * 3);
        }
    }
}
