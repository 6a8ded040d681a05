//! Order-preserving fan-out over scoped threads.

/// Applies `f` to every item on up to `workers` threads. Results come back in
/// input order, so the output does not depend on the worker count.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let items: Vec<u64> = (0..103).collect();
        let one = parallel_map(&items, 1, |x| x * x);
        for w in [2, 3, 8, 200] {
            assert_eq!(parallel_map(&items, w, |x| x * x), one);
        }
        assert!(parallel_map(&[] as &[u64], 4, |x| *x).is_empty());
    }
}
