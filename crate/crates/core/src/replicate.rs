//! Runs independent replications, in parallel when the `parallel` feature is on.
//!
//! Results always come back in replication order, so the output never
//! depends on scheduling.

/// `(0..n).map(f)`, possibly spread across threads.
pub fn replicate<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

#[cfg(test)]
mod tests {
    #[test]
    fn preserves_order() {
        let v = super::replicate(1000, |i| i * i);
        assert!(v.iter().enumerate().all(|(i, x)| *x == i * i));
    }
}
