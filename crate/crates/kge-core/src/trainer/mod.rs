//! The mini-batch training loop.
//!
//! Each step runs the four-phase cycle: sample positives from the
//! worker's partition and corrupt them, pull the embeddings the batch
//! touches, compute the loss forward/backward, and write gradients back.
//! Relation gradients are applied synchronously by the worker (relation
//! partitioning gives each non-SPLIT relation a single writer); entity
//! gradients can be handed to a per-worker updater thread so the next
//! batch's compute overlaps the write-back.
//!
//! Workers rendezvous at a barrier every `sync_interval` batches and at
//! every epoch boundary, where relation ownership is reshuffled. In
//! distributed mode one worker additionally enters the store-level
//! barrier at epoch ends so trainer processes stay in step.

pub mod barrier;
pub mod updater;

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::graph::TripletStore;
use crate::kvstore::{EmbeddingStore, TABLE_ENTITY, TABLE_RELATION};
use crate::models::{
    self, logistic_loss, ranking_loss, CorruptSide, ModelConfig, ScoreBatch,
};
use crate::partition::{
    partition_relations, relation_positions, reshuffle_partition, worker_positions,
    RelAssignment, RelationPartitionPlan,
};
use crate::sampling::{NegBatch, NegFlavor, NegSpec, Sampler};

use barrier::WorkerBarrier;
use updater::{UpdateJob, Updater, DEFAULT_QUEUE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    Ranking,
}

impl LossKind {
    pub fn parse(s: &str) -> Option<LossKind> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" => Some(LossKind::Logistic),
            "ranking" => Some(LossKind::Ranking),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::Ranking => "ranking",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Positives per batch (b).
    pub batch_size: usize,
    /// Negatives per corruption group (k).
    pub neg_k: usize,
    /// Positives per corruption group (g); must divide batch_size.
    pub group_size: usize,
    pub lr: f32,
    pub epochs: usize,
    /// Stop at the first epoch boundary where this many batches are done.
    pub max_steps: Option<u64>,
    pub workers: usize,
    /// Batches between worker barriers within an epoch.
    pub sync_interval: u64,
    pub neg_flavor: NegFlavor,
    pub loss: LossKind,
    /// Hand entity updates to a dedicated thread per worker.
    pub overlap_updates: bool,
    pub updater_queue_cap: usize,
    /// Relations above this multiple of the mean worker share get SPLIT.
    pub heavy_threshold: f64,
    pub seed: u64,
    /// Emit a log record every this many batches.
    pub log_interval: u64,
    pub barrier_timeout: Duration,
    /// Record the set of entity rows updated in each epoch (costs memory;
    /// used by update-equivalence checks).
    pub collect_touched: bool,
}

impl TrainConfig {
    /// The default training recipe. Hyperparameters are CLI-tunable; these
    /// are the documented defaults the accuracy targets assume.
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            batch_size: 1024,
            neg_k: 256,
            group_size: 256,
            lr: 0.1,
            epochs: 50,
            max_steps: None,
            workers: 8,
            sync_interval: 1000,
            neg_flavor: NegFlavor::Uniform,
            loss: LossKind::Logistic,
            overlap_updates: true,
            updater_queue_cap: DEFAULT_QUEUE_CAP,
            heavy_threshold: 1.0,
            seed: 0,
            log_interval: 100,
            barrier_timeout: Duration::from_secs(600),
            collect_touched: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.neg_spec().validate(self.batch_size)?;
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be positive".into()));
        }
        if self.sync_interval == 0 {
            return Err(Error::InvalidConfig(
                "sync_interval must be positive".into(),
            ));
        }
        if self.loss == LossKind::Ranking && self.model.gamma.is_none() {
            return Err(Error::InvalidConfig(
                "ranking loss needs a margin (gamma)".into(),
            ));
        }
        Ok(())
    }

    pub fn neg_spec(&self) -> NegSpec {
        NegSpec {
            g: self.group_size,
            k: self.neg_k,
            flavor: self.neg_flavor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub loss: f32,
    pub steps_per_sec: f32,
    pub worker: u16,
}

impl LogRecord {
    pub fn format(&self) -> String {
        format!(
            "step={} loss={} steps_per_sec={} worker={}",
            self.step, self.loss, self.steps_per_sec, self.worker
        )
    }
}

#[derive(Debug, Default)]
pub struct TrainReport {
    /// Batches processed, summed over workers.
    pub steps: u64,
    pub epochs_run: usize,
    pub elapsed: Duration,
    /// Mean loss over each worker's final log window, averaged.
    pub final_loss: f32,
    pub log: Vec<LogRecord>,
    /// Per-worker per-step loss series, for convergence checks.
    pub worker_losses: Vec<Vec<f32>>,
    /// Entity rows updated per epoch (only when collect_touched).
    pub touched_per_epoch: Option<Vec<HashSet<u64>>>,
    pub max_entity_rows_per_step: usize,
    pub max_relation_rows_per_step: usize,
    pub updater_max_delay_us: u64,
}

/// Interns ids so each unique row is pulled once and its gradient
/// accumulated once per batch.
struct RowIndex {
    index: HashMap<u64, usize>,
    ids: Vec<u64>,
}

impl RowIndex {
    fn new() -> Self {
        Self {
            index: HashMap::new(),
            ids: Vec::new(),
        }
    }

    fn get(&mut self, id: u64) -> usize {
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.ids.len();
        self.index.insert(id, i);
        self.ids.push(id);
        i
    }
}

struct StepOutput {
    loss: f32,
    entity_ids: Vec<u64>,
    entity_grads: Vec<f32>,
    rel_ids: Vec<u64>,
    rel_grads: Vec<f32>,
}

/// Forward/backward for one mini-batch against pulled rows.
fn process_batch(
    cfg: &TrainConfig,
    store: &dyn EmbeddingStore,
    batch: &NegBatch,
) -> Result<StepOutput> {
    let model = &cfg.model;
    let d = model.dim;
    let rd = model.rel_dim();
    let b = batch.len();
    let k = batch.k;

    let mut ents = RowIndex::new();
    let mut rels = RowIndex::new();
    let head_idx: Vec<usize> = batch.heads.iter().map(|&h| ents.get(h)).collect();
    let tail_idx: Vec<usize> = batch.tails.iter().map(|&t| ents.get(t)).collect();
    let rel_idx: Vec<usize> = batch.rels.iter().map(|&r| rels.get(r)).collect();
    let neg_idx: Vec<usize> = batch.neg_entities.iter().map(|&e| ents.get(e)).collect();

    let ent_rows = store.pull(TABLE_ENTITY, &ents.ids)?;
    let rel_rows = store.pull(TABLE_RELATION, &rels.ids)?;
    let ent_row = |i: usize| &ent_rows[i * d..(i + 1) * d];
    let rel_row = |i: usize| &rel_rows[i * rd..(i + 1) * rd];

    // forward
    let mut pos_scores = Vec::with_capacity(b);
    for i in 0..b {
        pos_scores.push(models::score(
            model,
            ent_row(head_idx[i]),
            rel_row(rel_idx[i]),
            ent_row(tail_idx[i]),
        )?);
    }
    let mut neg_scores = vec![0.0f32; b * k];
    let mut side_buf = vec![0.0f32; batch.group_size * d];
    let mut rels_buf = vec![0.0f32; batch.group_size * rd];
    let mut negs_buf = vec![0.0f32; k * d];
    let gather_group = |gi: usize,
                        side_buf: &mut [f32],
                        rels_buf: &mut [f32],
                        negs_buf: &mut [f32]| {
        let rows = batch.group_rows(gi);
        let mode = batch.modes[gi];
        for (j, row) in rows.enumerate() {
            let side = match mode {
                CorruptSide::Tail => head_idx[row],
                CorruptSide::Head => tail_idx[row],
            };
            side_buf[j * d..(j + 1) * d].copy_from_slice(ent_row(side));
            rels_buf[j * rd..(j + 1) * rd].copy_from_slice(rel_row(rel_idx[row]));
        }
        for (j, &ni) in neg_idx[gi * k..(gi + 1) * k].iter().enumerate() {
            negs_buf[j * d..(j + 1) * d].copy_from_slice(ent_row(ni));
        }
    };
    for gi in 0..batch.num_groups() {
        let rows = batch.group_rows(gi);
        let g = rows.len();
        gather_group(gi, &mut side_buf, &mut rels_buf, &mut negs_buf);
        models::score_group(
            model,
            &side_buf[..g * d],
            &rels_buf[..g * rd],
            &negs_buf,
            batch.modes[gi],
            &mut neg_scores[rows.start * k..rows.end * k],
        )?;
    }

    let scores = ScoreBatch {
        pos_scores,
        neg_scores,
        negatives_per_positive: k,
    };
    let (loss, dpos, dneg) = match cfg.loss {
        LossKind::Logistic => {
            // distance models get margin headroom; the shift is constant
            // so gradients and rankings are unaffected by it
            let margin = models::logistic_margin(model);
            if margin != 0.0 {
                let pos: Vec<f32> = scores.pos_scores.iter().map(|s| s + margin).collect();
                let neg: Vec<f32> = scores.neg_scores.iter().map(|s| s + margin).collect();
                logistic_loss(&pos, &neg)?
            } else {
                logistic_loss(&scores.pos_scores, &scores.neg_scores)?
            }
        }
        LossKind::Ranking => ranking_loss(
            &scores.pos_scores,
            &scores.neg_scores,
            model.gamma.expect("validated at config time"),
        )?,
    };

    // backward
    let mut ent_grads = vec![0.0f32; ents.ids.len() * d];
    let mut rel_grads = vec![0.0f32; rels.ids.len() * rd];
    let mut dh = vec![0.0f32; d];
    let mut dr = vec![0.0f32; rd];
    let mut dt = vec![0.0f32; d];
    for i in 0..b {
        if dpos[i] == 0.0 {
            continue;
        }
        let (hi, ri, ti) = (head_idx[i], rel_idx[i], tail_idx[i]);
        dh.fill(0.0);
        dr.fill(0.0);
        dt.fill(0.0);
        models::score_grad_into(
            model,
            ent_row(hi),
            rel_row(ri),
            ent_row(ti),
            dpos[i],
            &mut dh,
            &mut dr,
            &mut dt,
        )?;
        for c in 0..d {
            ent_grads[hi * d + c] += dh[c];
            ent_grads[ti * d + c] += dt[c];
        }
        for c in 0..rd {
            rel_grads[ri * rd + c] += dr[c];
        }
    }
    let mut d_side = vec![0.0f32; batch.group_size * d];
    let mut d_rels = vec![0.0f32; batch.group_size * rd];
    let mut d_negs = vec![0.0f32; k * d];
    for gi in 0..batch.num_groups() {
        let rows = batch.group_rows(gi);
        let g = rows.len();
        let mode = batch.modes[gi];
        gather_group(gi, &mut side_buf, &mut rels_buf, &mut negs_buf);
        d_side[..g * d].fill(0.0);
        d_rels[..g * rd].fill(0.0);
        d_negs.fill(0.0);
        models::score_group_grad(
            model,
            &side_buf[..g * d],
            &rels_buf[..g * rd],
            &negs_buf,
            mode,
            &dneg[rows.start * k..rows.end * k],
            &scores.neg_scores[rows.start * k..rows.end * k],
            &mut d_side[..g * d],
            &mut d_rels[..g * rd],
            &mut d_negs,
        )?;
        for (j, row) in rows.clone().enumerate() {
            let side = match mode {
                CorruptSide::Tail => head_idx[row],
                CorruptSide::Head => tail_idx[row],
            };
            for c in 0..d {
                ent_grads[side * d + c] += d_side[j * d + c];
            }
            let ri = rel_idx[row];
            for c in 0..rd {
                rel_grads[ri * rd + c] += d_rels[j * rd + c];
            }
        }
        for (j, &ni) in neg_idx[gi * k..(gi + 1) * k].iter().enumerate() {
            for c in 0..d {
                ent_grads[ni * d + c] += d_negs[j * d + c];
            }
        }
    }

    Ok(StepOutput {
        loss,
        entity_ids: ents.ids,
        entity_grads: ent_grads,
        rel_ids: rels.ids,
        rel_grads,
    })
}

struct WorkerOutcome {
    steps: u64,
    losses: Vec<f32>,
    log: Vec<LogRecord>,
    touched: Vec<HashSet<u64>>,
    max_entity_rows: usize,
    max_relation_rows: usize,
    updater_max_delay_us: u64,
    final_loss: f32,
}

/// Every worker derives the same per-epoch plan independently.
fn epoch_plan(base: &RelationPartitionPlan, epoch: usize) -> RelationPartitionPlan {
    if epoch == 0 {
        base.clone()
    } else {
        reshuffle_partition(base, epoch as u64)
    }
}

fn batches_in_epoch(load: u64, batch_size: usize) -> u64 {
    load.div_ceil(batch_size as u64)
}

/// Train embeddings over `triplets`, writing through `store`.
///
/// `base_positions` restricts sampling to a subset of triplet positions
/// (a machine's graph partition in distributed mode; None = the whole
/// store). `local_entities` is the negative-sampling pool for the
/// local-partition flavor.
pub fn train(
    cfg: &TrainConfig,
    triplets: &TripletStore,
    store: Arc<dyn EmbeddingStore>,
    base_positions: Option<Vec<u32>>,
    local_entities: Option<Vec<u64>>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let started = Instant::now();
    let n_entities = store.rows(TABLE_ENTITY) as u64;

    // per-relation position lists over this machine's share of triplets
    let rel_pos = match &base_positions {
        Some(positions) => {
            let mut by_rel = vec![Vec::new(); triplets.num_relations()];
            for &p in positions {
                by_rel[triplets.rels[p as usize] as usize].push(p);
            }
            by_rel
        }
        None => relation_positions(triplets),
    };
    let rel_counts: Vec<u64> = rel_pos.iter().map(|v| v.len() as u64).collect();
    if rel_counts.iter().sum::<u64>() == 0 {
        return Err(Error::EmptyInput("no triplets to train on".into()));
    }
    let base_plan = partition_relations(&rel_counts, cfg.workers, cfg.heavy_threshold, cfg.seed);

    let barrier = WorkerBarrier::new(cfg.workers, cfg.barrier_timeout);
    let abort = AtomicBool::new(false);
    let store_barrier_err: Mutex<Option<Error>> = Mutex::new(None);
    let total_steps = AtomicU64::new(0);
    let local_entities = Arc::new(local_entities);

    let outcomes: Vec<Result<WorkerOutcome>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..cfg.workers {
            let store = store.clone();
            let barrier = &barrier;
            let abort = &abort;
            let store_barrier_err = &store_barrier_err;
            let total_steps = &total_steps;
            let base_plan = &base_plan;
            let rel_pos = &rel_pos;
            let local_entities = local_entities.clone();
            handles.push(scope.spawn(move || -> Result<WorkerOutcome> {
                run_worker(WorkerCtx {
                    cfg,
                    triplets,
                    store,
                    base_plan,
                    rel_pos,
                    local_entities: local_entities.as_ref().as_deref(),
                    worker: w,
                    barrier,
                    abort,
                    store_barrier_err,
                    total_steps,
                    n_entities,
                })
            }));
        }
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut report = TrainReport {
        touched_per_epoch: cfg.collect_touched.then(Vec::new),
        ..Default::default()
    };
    let mut final_losses = Vec::new();
    for outcome in outcomes {
        let o = outcome?;
        report.steps += o.steps;
        report.worker_losses.push(o.losses);
        report.log.extend(o.log);
        report.max_entity_rows_per_step = report.max_entity_rows_per_step.max(o.max_entity_rows);
        report.max_relation_rows_per_step =
            report.max_relation_rows_per_step.max(o.max_relation_rows);
        report.updater_max_delay_us = report.updater_max_delay_us.max(o.updater_max_delay_us);
        if o.final_loss.is_finite() {
            final_losses.push(o.final_loss);
        }
        if let Some(per_epoch) = &mut report.touched_per_epoch {
            for (e, set) in o.touched.into_iter().enumerate() {
                if per_epoch.len() <= e {
                    per_epoch.push(HashSet::new());
                }
                per_epoch[e].extend(set);
            }
        }
    }
    if let Some(err) = store_barrier_err.into_inner().unwrap() {
        return Err(err);
    }
    report.log.sort_by_key(|r| r.step);
    report.final_loss = final_losses.iter().sum::<f32>() / final_losses.len().max(1) as f32;
    report.epochs_run = cfg.epochs;
    report.elapsed = started.elapsed();
    Ok(report)
}

struct WorkerCtx<'a> {
    cfg: &'a TrainConfig,
    triplets: &'a TripletStore,
    store: Arc<dyn EmbeddingStore>,
    base_plan: &'a RelationPartitionPlan,
    rel_pos: &'a [Vec<u32>],
    local_entities: Option<&'a [u64]>,
    worker: usize,
    barrier: &'a WorkerBarrier,
    abort: &'a AtomicBool,
    store_barrier_err: &'a Mutex<Option<Error>>,
    total_steps: &'a AtomicU64,
    n_entities: u64,
}

fn run_worker(ctx: WorkerCtx<'_>) -> Result<WorkerOutcome> {
    let WorkerCtx {
        cfg,
        triplets,
        store,
        base_plan,
        rel_pos,
        local_entities,
        worker,
        barrier,
        abort,
        store_barrier_err,
        total_steps,
        n_entities,
    } = ctx;
    let updater = cfg
        .overlap_updates
        .then(|| Updater::spawn(store.clone(), TABLE_ENTITY, cfg.updater_queue_cap));
    let mut sampler: Option<Sampler> = None;
    let mut out = WorkerOutcome {
        steps: 0,
        losses: Vec::new(),
        log: Vec::new(),
        touched: Vec::new(),
        max_entity_rows: 0,
        max_relation_rows: 0,
        updater_max_delay_us: 0,
        final_loss: f32::NAN,
    };
    let mut window_loss = 0.0f64;
    let mut window_n = 0u64;
    let mut window_started = Instant::now();
    let mut last_window_mean = f32::NAN;
    let mut since_guard = 0u64;
    let mut guard_sum = 0.0f32;

    'epochs: for epoch in 0..cfg.epochs {
        let plan = epoch_plan(base_plan, epoch);
        let positions = worker_positions(&plan, rel_pos, worker as u32);
        // in-epoch barrier points stop at the shortest worker's batch
        // count so every worker visits the same schedule
        let min_batches = (0..cfg.workers)
            .map(|w| batches_in_epoch(plan.loads[w], cfg.batch_size))
            .min()
            .unwrap_or(0);
        let mut touched: HashSet<u64> = HashSet::new();
        let mut epoch_batch = 0u64;

        if positions.is_empty() {
            for _ in 0..min_batches / cfg.sync_interval {
                sync_point(&updater, barrier, worker)?;
            }
        } else {
            match &mut sampler {
                Some(s) => s.start_epoch(positions)?,
                None => {
                    sampler = Some(Sampler::new(
                        positions,
                        cfg.batch_size,
                        cfg.neg_spec(),
                        n_entities,
                        local_entities.map(|l| l.to_vec()),
                        cfg.seed,
                        worker as u64,
                    )?)
                }
            }
            let sampler = sampler.as_mut().unwrap();
            while let Some(batch) = sampler.next_batch(triplets)? {
                if abort.load(Ordering::Relaxed) {
                    return Err(Error::Diverged("aborted by another worker".into()));
                }
                debug_assert!(batch.rels.iter().all(|&r| {
                    matches!(plan.owner(r), RelAssignment::Split)
                        || plan.owner(r) == RelAssignment::Worker(worker as u32)
                }));
                let step = process_batch(cfg, store.as_ref(), &batch)?;
                out.max_entity_rows = out.max_entity_rows.max(step.entity_ids.len());
                out.max_relation_rows = out.max_relation_rows.max(step.rel_ids.len());
                debug_assert!(
                    step.entity_ids.len() <= 2 * batch.len() + batch.num_groups() * batch.k
                );
                debug_assert!(step.rel_ids.len() <= batch.len());

                // relations applied synchronously, entities overlapped
                store.push(TABLE_RELATION, &step.rel_ids, &step.rel_grads, cfg.lr)?;
                if cfg.collect_touched {
                    touched.extend(step.entity_ids.iter().copied());
                }
                match &updater {
                    Some(u) => u.enqueue(UpdateJob {
                        ids: step.entity_ids,
                        grads: step.entity_grads,
                        lr: cfg.lr,
                        enqueued_at: Instant::now(),
                    })?,
                    None => {
                        store.push(TABLE_ENTITY, &step.entity_ids, &step.entity_grads, cfg.lr)?
                    }
                }

                out.steps += 1;
                epoch_batch += 1;
                total_steps.fetch_add(1, Ordering::Relaxed);
                out.losses.push(step.loss);
                window_loss += step.loss as f64;
                window_n += 1;

                guard_sum += step.loss;
                since_guard += 1;
                if since_guard >= 16 {
                    let mean = guard_sum / since_guard as f32;
                    if !mean.is_finite() {
                        abort.store(true, Ordering::Relaxed);
                        return Err(Error::Diverged(format!(
                            "running mean loss {mean} at worker {worker} step {}",
                            out.steps
                        )));
                    }
                    guard_sum = 0.0;
                    since_guard = 0;
                }

                if out.steps % cfg.log_interval == 0 {
                    let mean = (window_loss / window_n as f64) as f32;
                    let sps =
                        window_n as f32 / window_started.elapsed().as_secs_f32().max(1e-9);
                    out.log.push(LogRecord {
                        step: out.steps,
                        loss: mean,
                        steps_per_sec: sps,
                        worker: worker as u16,
                    });
                    last_window_mean = mean;
                    window_loss = 0.0;
                    window_n = 0;
                    window_started = Instant::now();
                }

                if epoch_batch % cfg.sync_interval == 0 && epoch_batch <= min_batches {
                    sync_point(&updater, barrier, worker)?;
                }
            }
        }

        if cfg.collect_touched {
            out.touched.push(touched);
        }
        // epoch boundary: drain, rendezvous, and let one worker sync the
        // store across processes
        sync_point(&updater, barrier, worker)?;
        if worker == 0 {
            if let Err(e) = store.sync_barrier() {
                abort.store(true, Ordering::Relaxed);
                *store_barrier_err.lock().unwrap() = Some(e);
            }
        }
        barrier.wait(worker)?;
        if abort.load(Ordering::Relaxed) {
            return Err(Error::Diverged("store barrier failed".into()));
        }
        if let Some(max) = cfg.max_steps {
            if out.steps >= max {
                break 'epochs;
            }
        }
    }

    if let Some(u) = updater {
        u.drain();
        out.updater_max_delay_us = u.max_delay_us();
        u.finish()?;
    }
    // flush the tail window so short runs still produce a log record
    if window_n > 0 {
        let mean = (window_loss / window_n as f64) as f32;
        out.log.push(LogRecord {
            step: out.steps,
            loss: mean,
            steps_per_sec: window_n as f32 / window_started.elapsed().as_secs_f32().max(1e-9),
            worker: worker as u16,
        });
        last_window_mean = mean;
    }
    out.final_loss = last_window_mean;
    Ok(out)
}

fn sync_point(updater: &Option<Updater>, barrier: &WorkerBarrier, worker: usize) -> Result<()> {
    if let Some(u) = updater {
        u.drain();
        debug_assert_eq!(u.pending(), 0);
    }
    barrier.wait(worker)
}
