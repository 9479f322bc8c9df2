//! Data-parallel helpers with a sequential fallback.
//!
//! The crate's hot loops (k-means assignment, inverted-list scans, batch
//! embedding) run on rayon when the `parallel` feature is enabled (the
//! default) and degrade to plain iteration when it is not. Callers that need
//! a guaranteed-sequential path regardless of features (oracles, benches)
//! use the `*_seq` twins directly.
//!
//! All helpers preserve input order in their output, so enabling the feature
//! never changes results, only wall-clock time.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_slice_seq(items, f)
    }
}

/// Sequential twin of [`map_slice`]; always compiled.
pub fn map_slice_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Maps `f` over indices `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u32> = (0..1000).collect();
        let doubled = map_slice(&xs, |x| x * 2);
        let doubled_seq = map_slice_seq(&xs, |x| x * 2);
        assert_eq!(doubled, doubled_seq);
        assert_eq!(doubled[999], 1998);
    }

    #[test]
    fn range_map_matches_direct_loop() {
        let got = map_range(64, |i| i * i);
        let want: Vec<usize> = (0..64).map(|i| i * i).collect();
        assert_eq!(got, want);
    }
}
