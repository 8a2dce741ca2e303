//! Rendezvous barrier for worker threads, with laggard reporting.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

struct State {
    arrived: Vec<bool>,
    count: usize,
    generation: u64,
}

/// All `n` workers enter before any returns. On timeout the error names
/// the workers that never arrived.
pub struct WorkerBarrier {
    state: Mutex<State>,
    cv: Condvar,
    timeout: Duration,
}

impl WorkerBarrier {
    pub fn new(n: usize, timeout: Duration) -> Self {
        Self {
            state: Mutex::new(State {
                arrived: vec![false; n],
                count: 0,
                generation: 0,
            }),
            cv: Condvar::new(),
            timeout,
        }
    }

    pub fn wait(&self, worker: usize) -> Result<()> {
        let mut st = self.state.lock().unwrap();
        let n = st.arrived.len();
        debug_assert!(!st.arrived[worker], "worker {worker} entered twice");
        st.arrived[worker] = true;
        st.count += 1;
        if st.count == n {
            st.count = 0;
            st.arrived.iter_mut().for_each(|a| *a = false);
            st.generation += 1;
            self.cv.notify_all();
            return Ok(());
        }
        let gen = st.generation;
        let deadline = Instant::now() + self.timeout;
        while st.generation == gen {
            let now = Instant::now();
            if now >= deadline {
                let laggards: Vec<usize> = st
                    .arrived
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| !a)
                    .map(|(w, _)| w)
                    .collect();
                return Err(Error::BarrierTimeout(laggards));
            }
            let (guard, _) = self.cv.wait_timeout(st, deadline - now).unwrap();
            st = guard;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn single_worker_returns_immediately() {
        let b = WorkerBarrier::new(1, Duration::from_secs(1));
        b.wait(0).unwrap();
        b.wait(0).unwrap();
    }

    #[test]
    fn staggered_entries_all_release_after_last() {
        let b = Arc::new(WorkerBarrier::new(4, Duration::from_secs(10)));
        let released = Arc::new(std::sync::atomic::AtomicUsize::new(0));
        std::thread::scope(|s| {
            for w in 0..4 {
                let b = b.clone();
                let released = released.clone();
                s.spawn(move || {
                    std::thread::sleep(Duration::from_millis(w as u64 * 30));
                    if w == 3 {
                        // nobody may have been released before the last entry
                        assert_eq!(released.load(std::sync::atomic::Ordering::SeqCst), 0);
                    }
                    b.wait(w).unwrap();
                    released.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                });
            }
        });
        assert_eq!(released.load(std::sync::atomic::Ordering::SeqCst), 4);
    }

    #[test]
    fn timeout_reports_laggard() {
        let b = WorkerBarrier::new(3, Duration::from_millis(50));
        let err = b.wait(1).unwrap_err();
        match err {
            Error::BarrierTimeout(laggards) => assert_eq!(laggards, vec![0, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reusable_across_generations() {
        let b = Arc::new(WorkerBarrier::new(2, Duration::from_secs(5)));
        std::thread::scope(|s| {
            for w in 0..2 {
                let b = b.clone();
                s.spawn(move || {
                    for _ in 0..100 {
                        b.wait(w).unwrap();
                    }
                });
            }
        });
    }
}
