//! Embedding tables with lock-free sparse reads and updates.
//!
//! Tables are shared mutable state: many workers pull rows and push
//! gradients concurrently without locking. Sparse updates rarely collide,
//! and when they do the races are benign — a reader may observe a torn
//! row and an element-level update may be lost. That is the usual hogwild
//! trade and it is accepted here by design; nothing downstream assumes
//! row-level atomicity.

use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const ADAGRAD_EPS: f32 = 1e-10;

/// A flat f32 buffer that hands out overlapping mutable access.
struct HogwildBuf(UnsafeCell<Vec<f32>>);

// Safety: concurrent plain f32 loads/stores cannot cause memory unsafety,
// only stale or torn values, which this container exists to permit.
unsafe impl Send for HogwildBuf {}
unsafe impl Sync for HogwildBuf {}

impl HogwildBuf {
    fn new(v: Vec<f32>) -> Self {
        Self(UnsafeCell::new(v))
    }

    #[allow(clippy::mut_from_ref)]
    fn slice_mut(&self) -> &mut [f32] {
        unsafe { (*self.0.get()).as_mut_slice() }
    }

    fn slice(&self) -> &[f32] {
        unsafe { (*self.0.get()).as_slice() }
    }
}

fn mix64(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Dense n×d f32 matrix with one Adagrad accumulator scalar per row.
pub struct EmbeddingTable {
    rows: usize,
    width: usize,
    init_bound: f32,
    data: HogwildBuf,
    opt_state: HogwildBuf,
    skipped_non_finite: AtomicU64,
}

impl EmbeddingTable {
    /// Rows are initialized iid uniform in [-init_bound, init_bound].
    ///
    /// Each row draws from its own seed stream, so row r has identical
    /// contents no matter how the table is sharded across servers.
    pub fn init(rows: usize, width: usize, init_bound: f32, seed: u64) -> Result<Self> {
        if rows == 0 || width == 0 {
            return Err(Error::InvalidConfig(format!(
                "table must be non-empty, got {rows}x{width}"
            )));
        }
        let mut data = vec![0.0f32; rows * width];
        if init_bound != 0.0 {
            for (r, chunk) in data.chunks_exact_mut(width).enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ (r as u64)));
                for x in chunk {
                    *x = rng.gen_range(-init_bound..=init_bound);
                }
            }
        }
        Ok(Self {
            rows,
            width,
            init_bound,
            data: HogwildBuf::new(data),
            opt_state: HogwildBuf::new(vec![0.0; rows]),
            skipped_non_finite: AtomicU64::new(0),
        })
    }

    /// Build from existing row data (checkpoint restore); optimizer state
    /// starts at zero.
    pub fn from_rows(rows: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * width {
            return Err(Error::ShapeMismatch(format!(
                "row data length {} != {rows}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            width,
            init_bound: 0.0,
            data: HogwildBuf::new(data),
            opt_state: HogwildBuf::new(vec![0.0; rows]),
            skipped_non_finite: AtomicU64::new(0),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn init_bound(&self) -> f32 {
        self.init_bound
    }

    /// Number of pushed rows rejected for non-finite gradients.
    pub fn skipped_non_finite(&self) -> u64 {
        self.skipped_non_finite.load(Ordering::Relaxed)
    }

    fn check_id(&self, id: u64) -> Result<usize> {
        if id >= self.rows as u64 {
            return Err(Error::IdOutOfRange {
                id,
                bound: self.rows as u64,
            });
        }
        Ok(id as usize)
    }

    /// Row view. Under concurrent writers the contents may be torn.
    pub fn row(&self, id: u64) -> Result<&[f32]> {
        let r = self.check_id(id)?;
        Ok(&self.data.slice()[r * self.width..(r + 1) * self.width])
    }

    /// Copy rows out in request order; duplicate ids allowed.
    pub fn sparse_pull(&self, ids: &[u64]) -> Result<Vec<f32>> {
        let mut out = vec![0.0f32; ids.len() * self.width];
        self.pull_into(ids, &mut out)?;
        Ok(out)
    }

    pub fn pull_into(&self, ids: &[u64], out: &mut [f32]) -> Result<()> {
        if out.len() != ids.len() * self.width {
            return Err(Error::ShapeMismatch(format!(
                "pull buffer {} != {} rows x width {}",
                out.len(),
                ids.len(),
                self.width
            )));
        }
        let data = self.data.slice();
        for (i, &id) in ids.iter().enumerate() {
            let r = self.check_id(id)?;
            out[i * self.width..(i + 1) * self.width]
                .copy_from_slice(&data[r * self.width..(r + 1) * self.width]);
        }
        Ok(())
    }

    /// Apply sparse Adagrad updates, one row per id occurrence, in order:
    ///
    ///   state[id] += mean_j(g_j²)
    ///   row[id]   -= lr · g / sqrt(state[id] + eps)
    ///
    /// Rows with non-finite gradients are skipped and counted instead of
    /// poisoning the table. Duplicate ids compose as sequential updates.
    pub fn sparse_push_adagrad(
        &self,
        ids: &[u64],
        grads: &[f32],
        lr: f32,
        eps: f32,
    ) -> Result<()> {
        if grads.len() != ids.len() * self.width {
            return Err(Error::ShapeMismatch(format!(
                "push payload {} != {} rows x width {}",
                grads.len(),
                ids.len(),
                self.width
            )));
        }
        let data = self.data.slice_mut();
        let state = self.opt_state.slice_mut();
        let w = self.width;
        for (i, &id) in ids.iter().enumerate() {
            let r = self.check_id(id)?;
            let g = &grads[i * w..(i + 1) * w];
            if !g.iter().all(|x| x.is_finite()) {
                self.skipped_non_finite.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            let mut sq = 0.0f32;
            for &x in g {
                sq += x * x;
            }
            let mean_sq = sq / w as f32;
            if mean_sq == 0.0 {
                continue;
            }
            state[r] += mean_sq;
            let denom = (state[r] + eps).sqrt();
            let step = lr / denom;
            let row = &mut data[r * w..(r + 1) * w];
            for (x, &gc) in row.iter_mut().zip(g) {
                *x -= step * gc;
            }
        }
        Ok(())
    }

    pub fn opt_state_of(&self, id: u64) -> Result<f32> {
        let r = self.check_id(id)?;
        Ok(self.opt_state.slice()[r])
    }

    /// Full copy of the row data (checkpointing).
    pub fn snapshot(&self) -> Vec<f32> {
        self.data.slice().to_vec()
    }

    /// Contiguous view of all rows. Reads race with concurrent pushes.
    pub fn raw(&self) -> &[f32] {
        self.data.slice()
    }
}
