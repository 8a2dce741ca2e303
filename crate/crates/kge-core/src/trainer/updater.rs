//! Overlapped entity-gradient updater.
//!
//! Each trainer worker hands its entity gradients to a dedicated updater
//! thread and moves on to the next batch without waiting for the writes.
//! The queue is bounded, which caps how stale the entity rows read by a
//! later batch can be: with capacity c, a read can miss at most c+1
//! batches of this worker's own updates (the queued ones plus the one in
//! flight).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, SyncSender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Instant;

use crate::error::Result;
use crate::kvstore::EmbeddingStore;

pub const DEFAULT_QUEUE_CAP: usize = 2;

/// One batch worth of entity gradients.
pub struct UpdateJob {
    pub ids: Vec<u64>,
    pub grads: Vec<f32>,
    pub lr: f32,
    pub enqueued_at: Instant,
}

struct Shared {
    pending: Mutex<u64>,
    drained: Condvar,
}

pub struct Updater {
    tx: Option<SyncSender<UpdateJob>>,
    shared: Arc<Shared>,
    join: Option<JoinHandle<Result<()>>>,
    applied: Arc<AtomicU64>,
    max_delay_us: Arc<AtomicU64>,
}

impl Updater {
    pub fn spawn(store: Arc<dyn EmbeddingStore>, table_id: u16, queue_cap: usize) -> Updater {
        let (tx, rx) = sync_channel::<UpdateJob>(queue_cap.max(1));
        let shared = Arc::new(Shared {
            pending: Mutex::new(0),
            drained: Condvar::new(),
        });
        let applied = Arc::new(AtomicU64::new(0));
        let max_delay_us = Arc::new(AtomicU64::new(0));
        let thread_shared = shared.clone();
        let thread_applied = applied.clone();
        let thread_delay = max_delay_us.clone();
        let join = std::thread::spawn(move || -> Result<()> {
            // jobs already buffered in the channel are still delivered
            // after the sender drops, so a clean shutdown drains fully
            while let Ok(job) = rx.recv() {
                let delay = job.enqueued_at.elapsed().as_micros() as u64;
                thread_delay.fetch_max(delay, Ordering::Relaxed);
                let res = store.push(table_id, &job.ids, &job.grads, job.lr);
                {
                    let mut p = thread_shared.pending.lock().unwrap();
                    *p -= 1;
                    if *p == 0 {
                        thread_shared.drained.notify_all();
                    }
                }
                res?;
                thread_applied.fetch_add(1, Ordering::Relaxed);
            }
            let pending = *thread_shared.pending.lock().unwrap();
            assert_eq!(pending, 0, "updater queue closed with {pending} jobs pending");
            Ok(())
        });
        Updater {
            tx: Some(tx),
            shared,
            join: Some(join),
            applied,
            max_delay_us,
        }
    }

    /// FIFO hand-off; blocks when the queue is at capacity, which is the
    /// staleness bound doing its job.
    pub fn enqueue(&self, job: UpdateJob) -> Result<()> {
        {
            let mut p = self.shared.pending.lock().unwrap();
            *p += 1;
        }
        if let Some(tx) = &self.tx {
            if tx.send(job).is_err() {
                let mut p = self.shared.pending.lock().unwrap();
                *p -= 1;
                return Err(crate::error::Error::Transport(
                    "updater thread terminated".into(),
                ));
            }
        }
        Ok(())
    }

    /// Block until every enqueued job has been applied.
    pub fn drain(&self) {
        let mut p = self.shared.pending.lock().unwrap();
        while *p != 0 {
            p = self.shared.drained.wait(p).unwrap();
        }
    }

    pub fn pending(&self) -> u64 {
        *self.shared.pending.lock().unwrap()
    }

    pub fn applied(&self) -> u64 {
        self.applied.load(Ordering::Relaxed)
    }

    /// Longest observed queue latency.
    pub fn max_delay_us(&self) -> u64 {
        self.max_delay_us.load(Ordering::Relaxed)
    }

    /// Drain, close the queue, and surface any store error.
    pub fn finish(mut self) -> Result<()> {
        self.drain();
        drop(self.tx.take());
        match self.join.take() {
            Some(j) => j.join().expect("updater thread panicked"),
            None => Ok(()),
        }
    }
}

impl Drop for Updater {
    fn drop(&mut self) {
        drop(self.tx.take());
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}
