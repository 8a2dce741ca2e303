//! `kge eval`

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;

use kge_core::eval::{metrics, rank_filtered, rank_sampled, EmbeddingView, EvalSide};
use kge_core::graph::{DatasetSplit, Vocab};
use kge_core::kvstore::checkpoint::{
    load_checkpoint, ENTITY_VOCAB_FILE, RELATION_VOCAB_FILE,
};

use crate::config::resolve;
use crate::{CmdError, CmdResult, ConfigArg};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint directory written by `kge train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset directory; the test split is evaluated.
    #[arg(long)]
    data: Option<PathBuf>,
    /// filtered | sampled
    #[arg(long)]
    protocol: Option<String>,
    /// Total sampled negatives per positive (sampled protocol; split
    /// half uniform, half degree-proportional).
    #[arg(long)]
    neg: Option<usize>,
    /// head | tail | both
    #[arg(long)]
    side: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    config: ConfigArg,
}

pub fn run(args: EvalArgs) -> CmdResult {
    let file = args.config.load()?;
    let ckpt_dir = resolve(args.checkpoint, &file, "checkpoint", PathBuf::from("run"))
        .map_err(CmdError::usage)?;
    let data_dir = resolve(args.data, &file, "data", PathBuf::from("data/FB15k"))
        .map_err(CmdError::usage)?;
    let protocol = resolve(args.protocol, &file, "protocol", "filtered".into())
        .map_err(CmdError::usage)?;
    let neg = resolve(args.neg, &file, "neg", 2000).map_err(CmdError::usage)?;
    let side_name =
        resolve(args.side, &file, "side", "both".into()).map_err(CmdError::usage)?;
    let seed = resolve(args.seed, &file, "seed", 0).map_err(CmdError::usage)?;
    let side = match side_name.as_str() {
        "head" => EvalSide::Head,
        "tail" => EvalSide::Tail,
        "both" => EvalSide::Both,
        other => return Err(CmdError::usage(anyhow!("unknown side {other:?}"))),
    };

    super::check_dataset_dir(&data_dir)?;
    let ckpt = load_checkpoint(&ckpt_dir).map_err(CmdError::usage)?;
    let data = DatasetSplit::load_dir(&data_dir, None).map_err(CmdError::usage)?;

    // ids in the checkpoint must mean the same entities as the dataset's
    let ckpt_vocab = Vocab::load(
        &ckpt_dir.join(ENTITY_VOCAB_FILE),
        &ckpt_dir.join(RELATION_VOCAB_FILE),
    )
    .map_err(CmdError::usage)?;
    if ckpt_vocab.num_entities() != data.vocab.num_entities()
        || ckpt_vocab.num_relations() != data.vocab.num_relations()
    {
        return Err(CmdError::usage(anyhow!(
            "checkpoint vocabulary ({} entities, {} relations) does not match dataset ({}, {})",
            ckpt_vocab.num_entities(),
            ckpt_vocab.num_relations(),
            data.vocab.num_entities(),
            data.vocab.num_relations()
        )));
    }
    for id in 0..ckpt_vocab.num_entities() as u64 {
        if ckpt_vocab.entity_name(id) != data.vocab.entity_name(id) {
            return Err(CmdError::usage(anyhow!(
                "entity id {id} names differ between checkpoint and dataset"
            )));
        }
    }

    let view = EmbeddingView {
        config: &ckpt.config,
        entities: &ckpt.entity_rows,
        relations: &ckpt.relation_rows,
    };
    let all = data.all_triplets();
    let ranks = match protocol.as_str() {
        "filtered" => rank_filtered(view, &data.test, &all, side)?,
        "sampled" => {
            let n_uniform = neg / 2;
            let n_degree = neg - n_uniform;
            rank_sampled(view, &data.test, &all, n_uniform, n_degree, side, seed)?
        }
        other => return Err(CmdError::usage(anyhow!("unknown protocol {other:?}"))),
    };
    let report = metrics(&ranks)?;
    println!("{}", report.table());
    println!("{}", report.summary_line());
    Ok(())
}
