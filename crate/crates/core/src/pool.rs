//! Order-preserving worker pool over scoped threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Applies `f(index, item)` to every item on up to `workers` threads and
/// returns results in input order. `workers == 0` runs inline without
/// spawning anything.
pub fn parallel_map<I, O, F>(items: Vec<I>, workers: usize, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(usize, I) -> O + Sync,
{
    if workers == 0 {
        return items.into_iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let n = items.len();
    let slots: Vec<Mutex<Option<I>>> = items.into_iter().map(|x| Mutex::new(Some(x))).collect();
    let results: Vec<Mutex<Option<O>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let item = slots[i].lock().expect("slot").take().expect("taken once");
                let out = f(i, item);
                *results[i].lock().expect("result") = Some(out);
            });
        }
    });
    results.into_iter().map(|m| m.into_inner().expect("result").expect("every job ran")).collect()
}

pub fn available_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
