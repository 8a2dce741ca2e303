//! Dataset-shape checks and the untrained-embedding baseline on FB15k.
//!
//! These need the benchmark data under `data/` (or `KGE_DATA_DIR`); they
//! skip with a notice when it is absent. The acceptance suite, by
//! contrast, hard-requires the data.

mod common;

use kge_core::eval::{metrics, rank_filtered, EmbeddingView, EvalSide};
use kge_core::graph::DatasetSplit;
use kge_core::kvstore::init_tables;
use kge_core::models::{ModelConfig, ModelKind};

fn fb15k() -> Option<DatasetSplit> {
    let dir = common::data_dir()?;
    Some(DatasetSplit::load_dir(&dir.join("FB15k"), None).unwrap())
}

#[test]
fn fb15k_split_counts() {
    let Some(data) = fb15k() else {
        eprintln!("skipping: FB15k not present");
        return;
    };
    assert_eq!(data.vocab.num_entities(), 14_951);
    assert_eq!(data.vocab.num_relations(), 1_345);
    assert_eq!(data.train.len(), 483_142);
    assert_eq!(data.valid.len(), 50_000);
    assert_eq!(data.test.len(), 59_071);
    assert_eq!(
        data.train.len() + data.valid.len() + data.test.len(),
        592_213
    );
    let total: u64 = data.train.rel_counts().iter().sum();
    assert_eq!(total, 483_142);
}

// Uniform-random embeddings rank near chance: filtered MRR well under
// 0.01 (the expectation of 1/rank under uniform ranks over ~15k
// candidates is about 7e-4).
#[test]
fn random_embeddings_score_near_chance() {
    let Some(data) = fb15k() else {
        eprintln!("skipping: FB15k not present");
        return;
    };
    let cfg = ModelConfig::new(ModelKind::TransEL1, 400)
        .unwrap()
        .with_gamma(12.0);
    let (e, r) = init_tables(
        data.vocab.num_entities(),
        data.vocab.num_relations(),
        cfg.dim,
        cfg.rel_dim(),
        cfg.init_bound(),
        12345,
    )
    .unwrap();
    let entities = e.snapshot();
    let relations = r.snapshot();
    let view = EmbeddingView {
        config: &cfg,
        entities: &entities,
        relations: &relations,
    };
    let all = data.all_triplets();
    let ranks = rank_filtered(view, &data.test, &all, EvalSide::Both).unwrap();
    let m = metrics(&ranks).unwrap();
    eprintln!("untrained baseline: {}", m.summary_line());
    assert!(m.mrr < 0.01, "untrained MRR {} suspiciously high", m.mrr);
}
