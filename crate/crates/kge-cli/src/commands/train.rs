//! `kge train`

use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::Args;

use kge_core::graph::DatasetSplit;
use kge_core::kvstore::{
    checkpoint, init_tables, EmbeddingStore, KvClient, LocalStore, ServerAddr, ShardMap,
    TABLE_ENTITY, TABLE_RELATION,
};
use kge_core::models::{ModelConfig, ModelKind};
use kge_core::partition::load_partition_file;
use kge_core::sampling::NegFlavor;
use kge_core::trainer::{train, LossKind, TrainConfig};

use crate::config::{resolve, resolve_opt, RunManifest};
use crate::{CmdError, CmdResult, ConfigArg};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Model kind: transe_l1, transe_l2, transr, distmult, complex,
    /// rescal, rotate.
    #[arg(long)]
    model: Option<String>,
    /// Dataset directory with train.txt / valid.txt / test.txt.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Entity embedding width.
    #[arg(long)]
    dim: Option<usize>,
    /// Margin; also sets the init bound (gamma + 2) / dim. Defaults per
    /// model: 20 for TransE, 12 for TransR/RotatE, 143 for
    /// DistMult/ComplEx/RESCAL.
    #[arg(long)]
    gamma: Option<f32>,
    #[arg(long)]
    lr: Option<f32>,
    /// Batch size b.
    #[arg(long)]
    batch: Option<usize>,
    /// Negatives per group k.
    #[arg(long)]
    neg: Option<usize>,
    /// Corruption group size g (must divide batch).
    #[arg(long)]
    chunk: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Stop at the first epoch boundary past this many batches per worker.
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Batches between worker barriers.
    #[arg(long)]
    sync_interval: Option<u64>,
    /// uniform | degree | local
    #[arg(long)]
    neg_flavor: Option<String>,
    /// Fraction of degree-based negatives for the degree flavor.
    #[arg(long)]
    mix: Option<f32>,
    /// logistic | ranking
    #[arg(long)]
    loss: Option<String>,
    /// Overlap entity updates with the next batch (true/false).
    #[arg(long)]
    overlap: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    /// Entity partition file (one part id per line) for distributed mode.
    #[arg(long)]
    partition_file: Option<PathBuf>,
    /// Which graph partition this trainer owns (with --partition-file).
    #[arg(long)]
    machine_part: Option<u32>,
    /// Comma-separated shard server endpoints; absent = train in-process.
    #[arg(long)]
    endpoint: Option<String>,
    /// Trainer processes participating in store barriers.
    #[arg(long)]
    barrier_size: Option<usize>,
    /// Send SHUTDOWN to the shard servers after training.
    #[arg(long)]
    shutdown_servers: Option<bool>,
    /// Output directory for checkpoint, manifest, and metrics log.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

pub fn run(args: TrainArgs) -> CmdResult {
    let file = args.config.load()?;
    let model_name = resolve(args.model, &file, "model", "transe_l1".into())
        .map_err(CmdError::usage)?;
    let kind = ModelKind::parse(&model_name)
        .ok_or_else(|| CmdError::usage(anyhow!("unknown model {model_name:?}")))?;
    let data_dir = resolve(args.data, &file, "data", PathBuf::from("data/FB15k"))
        .map_err(CmdError::usage)?;
    let dim = resolve(args.dim, &file, "dim", 400).map_err(CmdError::usage)?;
    let gamma = resolve_opt(args.gamma, &file, "gamma", None).map_err(CmdError::usage)?;
    let out_dir = resolve(args.out, &file, "out", PathBuf::from("run"))
        .map_err(CmdError::usage)?;

    let mut model = ModelConfig::new(kind, dim).map_err(CmdError::usage)?;
    model.gamma = Some(gamma.unwrap_or_else(|| kge_core::models::default_gamma(kind)));
    let gamma = model.gamma;
    let mut cfg = TrainConfig::new(model);
    cfg.lr = resolve(args.lr, &file, "lr", cfg.lr).map_err(CmdError::usage)?;
    cfg.batch_size =
        resolve(args.batch, &file, "batch", cfg.batch_size).map_err(CmdError::usage)?;
    cfg.neg_k = resolve(args.neg, &file, "neg", cfg.neg_k).map_err(CmdError::usage)?;
    cfg.group_size =
        resolve(args.chunk, &file, "chunk", cfg.group_size).map_err(CmdError::usage)?;
    cfg.epochs = resolve(args.epochs, &file, "epochs", cfg.epochs).map_err(CmdError::usage)?;
    cfg.max_steps =
        resolve_opt(args.max_steps, &file, "max_steps", None).map_err(CmdError::usage)?;
    cfg.workers =
        resolve(args.workers, &file, "workers", cfg.workers).map_err(CmdError::usage)?;
    cfg.sync_interval = resolve(args.sync_interval, &file, "sync_interval", cfg.sync_interval)
        .map_err(CmdError::usage)?;
    cfg.seed = resolve(args.seed, &file, "seed", cfg.seed).map_err(CmdError::usage)?;
    let flavor = resolve(args.neg_flavor, &file, "neg_flavor", "uniform".into())
        .map_err(CmdError::usage)?;
    let mix = resolve(args.mix, &file, "mix", 0.5).map_err(CmdError::usage)?;
    cfg.neg_flavor = match flavor.as_str() {
        "uniform" => NegFlavor::Uniform,
        "degree" | "in-batch-degree" => NegFlavor::InBatchDegree { mix },
        "local" | "local-partition" => NegFlavor::LocalPartition,
        other => return Err(CmdError::usage(anyhow!("unknown neg flavor {other:?}"))),
    };
    let loss_name =
        resolve(args.loss, &file, "loss", "logistic".into()).map_err(CmdError::usage)?;
    cfg.loss = LossKind::parse(&loss_name)
        .ok_or_else(|| CmdError::usage(anyhow!("unknown loss {loss_name:?}")))?;
    cfg.overlap_updates =
        resolve(args.overlap, &file, "overlap", true).map_err(CmdError::usage)?;
    cfg.validate().map_err(CmdError::usage)?;

    super::check_dataset_dir(&data_dir)?;
    let mut manifest = RunManifest::default();
    manifest.record("model", kind.name());
    manifest.record("data", data_dir.display());
    manifest.record("dim", dim);
    if let Some(g) = gamma {
        manifest.record("gamma", g);
    }
    manifest.record("lr", cfg.lr);
    manifest.record("batch", cfg.batch_size);
    manifest.record("neg", cfg.neg_k);
    manifest.record("chunk", cfg.group_size);
    manifest.record("epochs", cfg.epochs);
    manifest.record("workers", cfg.workers);
    manifest.record("sync_interval", cfg.sync_interval);
    manifest.record("neg_flavor", &flavor);
    manifest.record("mix", mix);
    manifest.record("loss", loss_name);
    manifest.record("overlap", cfg.overlap_updates);
    manifest.record("seed", cfg.seed);
    manifest.record("init_bound", cfg.model.init_bound());

    let t0 = Instant::now();
    let data = DatasetSplit::load_dir(&data_dir, None).map_err(CmdError::usage)?;
    manifest.time("load", t0.elapsed());
    eprintln!(
        "loaded {}: {} entities, {} relations, {} train triplets",
        data_dir.display(),
        data.vocab.num_entities(),
        data.vocab.num_relations(),
        data.train.len()
    );

    // graph partition: restrict this trainer to its machine's triplets
    let t0 = Instant::now();
    let (base_positions, local_entities) = match (&args.partition_file, args.machine_part) {
        (Some(path), part) => {
            let parts = file.get::<usize>("parts")?.unwrap_or(1).max(1);
            let plan = load_partition_file(path, parts.max(2), &data.train)
                .map_err(CmdError::usage)?;
            let part = part.unwrap_or(0);
            manifest.record("partition_file", path.display());
            manifest.record("machine_part", part);
            (
                Some(plan.triplets_of(part)),
                Some(plan.entities_of(part)),
            )
        }
        (None, Some(_)) => {
            return Err(CmdError::usage(anyhow!(
                "--machine-part needs --partition-file"
            )))
        }
        (None, None) => (None, None),
    };
    manifest.time("partition", t0.elapsed());

    let n_ent = data.vocab.num_entities();
    let n_rel = data.vocab.num_relations();
    let endpoints: Option<String> =
        resolve_opt(args.endpoint, &file, "endpoint", None).map_err(CmdError::usage)?;
    let mut kv_client: Option<Arc<KvClient>> = None;
    let store: Arc<dyn EmbeddingStore> = match endpoints {
        None => {
            let (e, r) = init_tables(
                n_ent,
                n_rel,
                cfg.model.dim,
                cfg.model.rel_dim(),
                cfg.model.init_bound(),
                cfg.seed,
            )?;
            Arc::new(LocalStore::new(e, r))
        }
        Some(list) => {
            let addrs: Vec<ServerAddr> = list
                .split(',')
                .map(|a| ServerAddr::Remote(a.trim().to_string()))
                .collect();
            let shard = ShardMap::new(addrs.len(), n_rel, cfg.seed);
            manifest.record("endpoint", &list);
            let client = Arc::new(KvClient::connect(
                addrs,
                shard,
                vec![cfg.model.dim, cfg.model.rel_dim()],
                vec![n_ent, n_rel],
                Duration::from_secs(30),
            )?);
            kv_client = Some(client.clone());
            client
        }
    };
    let _: Option<usize> = resolve_opt(args.barrier_size, &file, "barrier_size", None)
        .map_err(CmdError::usage)?; // participants are fixed server-side

    let t0 = Instant::now();
    let report = train(&cfg, &data.train, store.clone(), base_positions, local_entities)?;
    manifest.time("train", t0.elapsed());
    eprintln!(
        "trained {} steps in {:.1}s, final loss {:.5}",
        report.steps,
        report.elapsed.as_secs_f64(),
        report.final_loss
    );

    let t0 = Instant::now();
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut log = std::fs::File::create(out_dir.join("metrics.log"))
        .with_context(|| format!("writing {}", out_dir.join("metrics.log").display()))?;
    for record in &report.log {
        writeln!(log, "{}", record.format()).map_err(CmdError::runtime)?;
    }
    let entity_rows = pull_all(store.as_ref(), TABLE_ENTITY, n_ent, cfg.model.dim)?;
    let relation_rows = pull_all(store.as_ref(), TABLE_RELATION, n_rel, cfg.model.rel_dim())?;
    checkpoint::save_checkpoint(&out_dir, &cfg.model, &data.vocab, &entity_rows, &relation_rows)?;
    manifest.time("checkpoint", t0.elapsed());
    manifest.write(&out_dir.join("manifest.txt"))?;
    eprintln!("checkpoint written to {}", out_dir.display());
    let shutdown = resolve(args.shutdown_servers, &file, "shutdown_servers", false)
        .map_err(CmdError::usage)?;
    if shutdown {
        if let Some(client) = kv_client {
            client.shutdown_servers()?;
        }
    }
    Ok(())
}

fn pull_all(
    store: &dyn EmbeddingStore,
    table: u16,
    rows: usize,
    width: usize,
) -> Result<Vec<f32>, CmdError> {
    let mut out = Vec::with_capacity(rows * width);
    let chunk = 8192;
    let mut id = 0u64;
    while (id as usize) < rows {
        let end = (id as usize + chunk).min(rows) as u64;
        let ids: Vec<u64> = (id..end).collect();
        out.extend(store.pull(table, &ids)?);
        id = end;
    }
    Ok(out)
}
