//! `kge partition`

use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;

use kge_core::graph::DatasetSplit;
use kge_core::partition::partition_graph_greedy;

use crate::config::resolve;
use crate::{CmdError, CmdResult, ConfigArg};

#[derive(Args, Debug)]
pub struct PartitionArgs {
    /// Dataset directory; the train split defines the graph.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Number of parts P.
    #[arg(long)]
    parts: Option<usize>,
    /// Output assignment file (one part id per line, line i = entity i).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    config: ConfigArg,
}

pub fn run(args: PartitionArgs) -> CmdResult {
    let file = args.config.load()?;
    let data_dir = resolve(args.data, &file, "data", PathBuf::from("data/FB15k"))
        .map_err(CmdError::usage)?;
    let parts = resolve(args.parts, &file, "parts", 1).map_err(CmdError::usage)?;
    let out = resolve(args.out, &file, "out", PathBuf::from("partition.txt"))
        .map_err(CmdError::usage)?;
    let seed = resolve(args.seed, &file, "seed", 0).map_err(CmdError::usage)?;
    if parts < 1 {
        return Err(CmdError::usage(anyhow!("parts must be at least 1")));
    }
    super::check_dataset_dir(&data_dir)?;
    let data = DatasetSplit::load_dir(&data_dir, None).map_err(CmdError::usage)?;
    let plan = partition_graph_greedy(&data.train, parts, seed).map_err(CmdError::usage)?;
    plan.save(&out)
        .with_context(|| format!("writing {}", out.display()))?;
    let total = data.train.len() as f64;
    println!(
        "parts={} entities={} triplets={} edge_cut={} cut_fraction={:.4}",
        parts,
        data.vocab.num_entities(),
        data.train.len(),
        plan.edge_cut,
        plan.edge_cut as f64 / total.max(1.0)
    );
    for (p, &count) in plan.part_triplet_counts.iter().enumerate() {
        println!("part={p} triplets={count}");
    }
    Ok(())
}
