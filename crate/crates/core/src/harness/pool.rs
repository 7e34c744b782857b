use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Runs `f` over `tasks` on up to `workers` scoped threads. Results come back
/// in task order whatever the scheduling, so callers stay deterministic.
pub fn run_pool<T, R, F>(tasks: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, tasks.len().max(1));
    if workers == 1 {
        return tasks.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = tasks.get(i) else { break };
                let r = f(task);
                slots.lock().expect("pool slot lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("pool slot lock")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect()
}
