//! Link-prediction evaluation.
//!
//! Two protocols. The filtered protocol scores every possible corruption
//! of each test triplet on one side, removes candidates that are true
//! triplets anywhere in the dataset (keeping the positive itself), and
//! ranks the positive by score. The sampled protocol ranks the positive
//! against a fixed number of sampled negatives — half uniform, half
//! proportional to entity degree — without filtering; it exists for
//! graphs where the filtered protocol is too expensive.
//!
//! Ties are broken pessimistically: the positive ranks last among equal
//! scores, so constant embeddings cannot look good. Scoring is f32 like
//! training; metric accumulation is f64.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::TripletStore;
use crate::models::{self, CorruptSide, ModelConfig};

/// Which corruptions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSide {
    Head,
    Tail,
    Both,
}

/// Read-only view of trained embeddings.
#[derive(Clone, Copy)]
pub struct EmbeddingView<'a> {
    pub config: &'a ModelConfig,
    pub entities: &'a [f32],
    pub relations: &'a [f32],
}

impl<'a> EmbeddingView<'a> {
    pub fn n_entities(&self) -> usize {
        self.entities.len() / self.config.dim
    }

    pub fn entity(&self, id: u64) -> &'a [f32] {
        let d = self.config.dim;
        &self.entities[id as usize * d..(id as usize + 1) * d]
    }

    pub fn relation(&self, id: u64) -> &'a [f32] {
        let rd = self.config.rel_dim();
        &self.relations[id as usize * rd..(id as usize + 1) * rd]
    }

    fn check(&self, store: &TripletStore) -> Result<()> {
        if self.entities.len() % self.config.dim != 0
            || self.relations.len() % self.config.rel_dim() != 0
        {
            return Err(Error::ShapeMismatch("embedding table widths".into()));
        }
        if store.num_entities() > self.n_entities()
            || store.num_relations() > self.relations.len() / self.config.rel_dim()
        {
            return Err(Error::ShapeMismatch(format!(
                "vocabulary ({} entities, {} relations) exceeds tables",
                store.num_entities(),
                store.num_relations()
            )));
        }
        Ok(())
    }
}

/// Per-positive 1-based ranks plus candidate-list sizes.
#[derive(Debug, Clone, Default)]
pub struct RankResult {
    pub ranks: Vec<u32>,
    pub candidate_counts: Vec<u32>,
    pub protocol: &'static str,
}

impl RankResult {
    fn push(&mut self, rank: u32, candidates: u32) {
        debug_assert!(rank >= 1 && rank <= candidates);
        self.ranks.push(rank);
        self.candidate_counts.push(candidates);
    }

    fn extend(&mut self, other: RankResult) {
        self.ranks.extend(other.ranks);
        self.candidate_counts.extend(other.candidate_counts);
    }
}

/// Pessimistic rank of `pos` within `scores`: 1 + the number of unmasked
/// non-positive candidates scoring at least the positive. Returns the
/// rank and the candidate count |S|.
fn rank_pessimistic(
    scores: &[f32],
    pos: usize,
    mut masked: impl FnMut(usize) -> bool,
) -> (u32, u32) {
    let pos_score = scores[pos];
    let mut above = 0u32;
    let mut survivors = 1u32; // the positive itself
    for (c, &s) in scores.iter().enumerate() {
        if c == pos || masked(c) {
            continue;
        }
        survivors += 1;
        if s >= pos_score {
            above += 1;
        }
    }
    (above + 1, survivors)
}

/// Map (relation, fixed-side entity) -> entities completing a true
/// triplet; the masking index for the filtered protocol.
struct FilterIndex {
    by_rel_head: HashMap<(u64, u64), Vec<u64>>,
    by_rel_tail: HashMap<(u64, u64), Vec<u64>>,
}

impl FilterIndex {
    fn build(all: &TripletStore) -> Self {
        let mut by_rel_head: HashMap<(u64, u64), Vec<u64>> = HashMap::new();
        let mut by_rel_tail: HashMap<(u64, u64), Vec<u64>> = HashMap::new();
        for pos in 0..all.len() {
            let (h, r, t) = all.triplet(pos);
            by_rel_head.entry((r, h)).or_default().push(t);
            by_rel_tail.entry((r, t)).or_default().push(h);
        }
        Self {
            by_rel_head,
            by_rel_tail,
        }
    }

    fn true_tails(&self, r: u64, h: u64) -> &[u64] {
        self.by_rel_head.get(&(r, h)).map_or(&[], |v| v)
    }

    fn true_heads(&self, r: u64, t: u64) -> &[u64] {
        self.by_rel_tail.get(&(r, t)).map_or(&[], |v| v)
    }
}

const EVAL_CHUNK: usize = 32;

/// Filtered protocol: rank each test triplet against all |V| corruptions
/// of the requested side(s), masking corruptions that exist anywhere in
/// `all` (train ∪ valid ∪ test).
pub fn rank_filtered(
    view: EmbeddingView<'_>,
    test: &TripletStore,
    all: &TripletStore,
    side: EvalSide,
) -> Result<RankResult> {
    view.check(test)?;
    view.check(all)?;
    let filter = FilterIndex::build(all);
    let mut result = RankResult {
        protocol: "filtered",
        ..Default::default()
    };
    if matches!(side, EvalSide::Tail | EvalSide::Both) {
        result.extend(rank_one_side_filtered(view, test, &filter, CorruptSide::Tail)?);
    }
    if matches!(side, EvalSide::Head | EvalSide::Both) {
        result.extend(rank_one_side_filtered(view, test, &filter, CorruptSide::Head)?);
    }
    Ok(result)
}

fn rank_one_side_filtered(
    view: EmbeddingView<'_>,
    test: &TripletStore,
    filter: &FilterIndex,
    mode: CorruptSide,
) -> Result<RankResult> {
    let d = view.config.dim;
    let rd = view.config.rel_dim();
    let nv = view.n_entities();
    let indices: Vec<usize> = (0..test.len()).collect();
    let chunks: Vec<Result<Vec<(u32, u32)>>> = indices
        .par_chunks(EVAL_CHUNK)
        .map_init(
            || {
                (
                    vec![0.0f32; EVAL_CHUNK * nv],
                    vec![false; nv],
                    Vec::new(),
                    Vec::new(),
                )
            },
            |(out, mask, side_buf, rels_buf), chunk| {
                side_buf.clear();
                rels_buf.clear();
                for &i in chunk {
                    let (h, r, t) = test.triplet(i);
                    let fixed = match mode {
                        CorruptSide::Tail => h,
                        CorruptSide::Head => t,
                    };
                    side_buf.extend_from_slice(view.entity(fixed));
                    rels_buf.extend_from_slice(view.relation(r));
                }
                let g = chunk.len();
                models::score_group(
                    view.config,
                    &side_buf[..g * d],
                    &rels_buf[..g * rd],
                    view.entities,
                    mode,
                    &mut out[..g * nv],
                )?;
                let mut ranks = Vec::with_capacity(g);
                for (row, &i) in chunk.iter().enumerate() {
                    let (h, r, t) = test.triplet(i);
                    let (target, others) = match mode {
                        CorruptSide::Tail => (t, filter.true_tails(r, h)),
                        CorruptSide::Head => (h, filter.true_heads(r, t)),
                    };
                    for &e in others {
                        mask[e as usize] = true;
                    }
                    let scores = &out[row * nv..(row + 1) * nv];
                    let (rank, cands) =
                        rank_pessimistic(scores, target as usize, |c| mask[c]);
                    for &e in others {
                        mask[e as usize] = false;
                    }
                    ranks.push((rank, cands));
                }
                Ok(ranks)
            },
        )
        .collect();
    let mut result = RankResult {
        protocol: "filtered",
        ..Default::default()
    };
    for chunk in chunks {
        for (rank, cands) in chunk? {
            result.push(rank, cands);
        }
    }
    Ok(result)
}

/// Degree-proportional entity sampler over a store's incidences.
pub struct DegreeSampler {
    cumulative: Vec<u64>,
}

impl DegreeSampler {
    pub fn new(degrees_from: &TripletStore) -> Result<Self> {
        let nv = degrees_from.num_entities();
        let mut cumulative = Vec::with_capacity(nv);
        let mut acc = 0u64;
        for e in 0..nv as u64 {
            acc += degrees_from.entity_degree(e)?;
            cumulative.push(acc);
        }
        if acc == 0 {
            return Err(Error::EmptyInput("degree source has no incidences".into()));
        }
        Ok(Self { cumulative })
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> u64 {
        let total = *self.cumulative.last().unwrap();
        let x = rng.gen_range(0..total);
        self.cumulative.partition_point(|&c| c <= x) as u64
    }
}

/// Sampled protocol: rank each positive within itself plus
/// `n_uniform + n_degree` sampled corruptions, unfiltered.
pub fn rank_sampled(
    view: EmbeddingView<'_>,
    test: &TripletStore,
    degrees_from: &TripletStore,
    n_uniform: usize,
    n_degree: usize,
    side: EvalSide,
    seed: u64,
) -> Result<RankResult> {
    view.check(test)?;
    let sampler = DegreeSampler::new(degrees_from)?;
    let mut result = RankResult {
        protocol: "sampled",
        ..Default::default()
    };
    if matches!(side, EvalSide::Tail | EvalSide::Both) {
        result.extend(rank_one_side_sampled(
            view,
            test,
            &sampler,
            n_uniform,
            n_degree,
            CorruptSide::Tail,
            seed,
        )?);
    }
    if matches!(side, EvalSide::Head | EvalSide::Both) {
        result.extend(rank_one_side_sampled(
            view,
            test,
            &sampler,
            n_uniform,
            n_degree,
            CorruptSide::Head,
            seed ^ 0x6865_6164,
        )?);
    }
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn rank_one_side_sampled(
    view: EmbeddingView<'_>,
    test: &TripletStore,
    sampler: &DegreeSampler,
    n_uniform: usize,
    n_degree: usize,
    mode: CorruptSide,
    seed: u64,
) -> Result<RankResult> {
    use rand::{Rng, SeedableRng};
    let d = view.config.dim;
    let nv = view.n_entities() as u64;
    let n_cand = n_uniform + n_degree + 1;
    let indices: Vec<usize> = (0..test.len()).collect();
    let ranks: Vec<Result<(u32, u32)>> = indices
        .par_iter()
        .map_init(
            || (vec![0.0f32; n_cand * d], vec![0.0f32; n_cand]),
            |(cand_buf, scores), &i| {
                let (h, r, t) = test.triplet(i);
                let (fixed, target) = match mode {
                    CorruptSide::Tail => (h, t),
                    CorruptSide::Head => (t, h),
                };
                // candidate 0 is the positive; draws are keyed by (seed,
                // positive index) so parallel order does not matter
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                    seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                );
                cand_buf[..d].copy_from_slice(view.entity(target));
                for j in 0..n_uniform + n_degree {
                    let e = if j < n_uniform {
                        rng.gen_range(0..nv)
                    } else {
                        sampler.sample(&mut rng)
                    };
                    cand_buf[(j + 1) * d..(j + 2) * d].copy_from_slice(view.entity(e));
                }
                models::score_group(
                    view.config,
                    view.entity(fixed),
                    view.relation(r),
                    cand_buf,
                    mode,
                    scores,
                )?;
                Ok(rank_pessimistic(scores, 0, |_| false))
            },
        )
        .collect();
    let mut result = RankResult {
        protocol: "sampled",
        ..Default::default()
    };
    for r in ranks {
        let (rank, cands) = r?;
        result.push(rank, cands);
    }
    Ok(result)
}

/// Hit@k, mean rank, and mean reciprocal rank over pooled ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub hit1: f64,
    pub hit3: f64,
    pub hit10: f64,
    pub mr: f64,
    pub mrr: f64,
    pub q: usize,
}

impl MetricReport {
    /// The machine-readable report line.
    pub fn summary_line(&self) -> String {
        format!(
            "hit1={:.6} hit3={:.6} hit10={:.6} mr={:.4} mrr={:.6} q={}",
            self.hit1, self.hit3, self.hit10, self.mr, self.mrr, self.q
        )
    }

    pub fn table(&self) -> String {
        format!(
            "metric   value\nHit@1    {:.4}\nHit@3    {:.4}\nHit@10   {:.4}\nMR       {:.2}\nMRR      {:.4}\npositives {}",
            self.hit1, self.hit3, self.hit10, self.mr, self.mrr, self.q
        )
    }
}

pub fn metrics(ranks: &RankResult) -> Result<MetricReport> {
    if ranks.ranks.is_empty() {
        return Err(Error::EmptyInput("no ranks to aggregate".into()));
    }
    let q = ranks.ranks.len() as f64;
    let mut hit1 = 0.0f64;
    let mut hit3 = 0.0f64;
    let mut hit10 = 0.0f64;
    let mut mr = 0.0f64;
    let mut mrr = 0.0f64;
    for &rank in &ranks.ranks {
        let r = rank as f64;
        if rank <= 1 {
            hit1 += 1.0;
        }
        if rank <= 3 {
            hit3 += 1.0;
        }
        if rank <= 10 {
            hit10 += 1.0;
        }
        mr += r;
        mrr += 1.0 / r;
    }
    Ok(MetricReport {
        hit1: hit1 / q,
        hit3: hit3 / q,
        hit10: hit10 / q,
        mr: mr / q,
        mrr: mrr / q,
        q: ranks.ranks.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn result_from(ranks: Vec<u32>) -> RankResult {
        let counts = ranks.iter().map(|&r| r.max(100)).collect();
        RankResult {
            ranks,
            candidate_counts: counts,
            protocol: "test",
        }
    }

    #[test]
    fn metrics_hand_values() {
        let m = metrics(&result_from(vec![1, 2, 4])).unwrap();
        assert!((m.mr - 2.333333).abs() < 1e-4);
        assert!((m.mrr - 0.583333).abs() < 1e-4);
        assert!((m.hit1 - 1.0 / 3.0).abs() < 1e-9);
        assert!((m.hit3 - 2.0 / 3.0).abs() < 1e-9);
        assert!((m.hit10 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn metrics_all_first() {
        let m = metrics(&result_from(vec![1; 7])).unwrap();
        assert_eq!(m.mrr, 1.0);
        assert_eq!(m.mr, 1.0);
        assert_eq!(m.hit1, 1.0);
        assert_eq!(m.hit10, 1.0);
    }

    #[test]
    fn metrics_empty_rejected() {
        assert!(metrics(&result_from(vec![])).is_err());
    }

    // Second-implementation oracle over random rank lists.
    #[test]
    fn metrics_match_independent_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ranks: Vec<u32> = (0..10_000).map(|_| rng.gen_range(1..=5000)).collect();
        let m = metrics(&result_from(ranks.clone())).unwrap();
        // the oracle accumulates in a different order and from sorted data
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        let q = sorted.len() as f64;
        let mr: f64 = sorted.iter().map(|&r| r as f64).sum::<f64>() / q;
        let mrr: f64 = sorted.iter().rev().map(|&r| (r as f64).recip()).sum::<f64>() / q;
        let hit = |k: u32| sorted.partition_point(|&r| r <= k) as f64 / q;
        assert!((m.mr - mr).abs() < 1e-12 * mr.abs().max(1.0));
        assert!((m.mrr - mrr).abs() < 1e-12);
        assert!((m.hit1 - hit(1)).abs() < 1e-15);
        assert!((m.hit3 - hit(3)).abs() < 1e-15);
        assert!((m.hit10 - hit(10)).abs() < 1e-15);
    }

    #[test]
    fn pessimistic_tie_rule() {
        // all scores equal: rank = number of unmasked candidates
        let scores = vec![0.5f32; 8];
        let (rank, cands) = rank_pessimistic(&scores, 3, |_| false);
        assert_eq!(rank, 8);
        assert_eq!(cands, 8);
        // positive at +inf: rank 1 regardless
        let mut s = vec![1.0f32; 8];
        s[2] = f32::INFINITY;
        assert_eq!(rank_pessimistic(&s, 2, |_| false).0, 1);
    }

    #[test]
    fn masking_shrinks_candidates() {
        let scores = vec![3.0, 2.0, 1.0, 0.5];
        let (rank, cands) = rank_pessimistic(&scores, 2, |c| c == 0);
        // candidate 0 masked; candidate 1 (2.0) still above 1.0
        assert_eq!(rank, 2);
        assert_eq!(cands, 3);
    }

    fn oracle_rank(scores: &[f32], pos: usize, masked: &HashSet<usize>) -> (u32, u32) {
        let mut cands: Vec<usize> = (0..scores.len())
            .filter(|c| *c == pos || !masked.contains(c))
            .collect();
        cands.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap()
                .then((a == pos).cmp(&(b == pos)))
        });
        (
            cands.iter().position(|&c| c == pos).unwrap() as u32 + 1,
            cands.len() as u32,
        )
    }

    // Exhaustive-sort oracle on random instances, with ties forced.
    #[test]
    fn rank_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.gen_range(2..30);
            let scores: Vec<f32> =
                (0..n).map(|_| (rng.gen_range(0..6) as f32) * 0.5).collect();
            let pos = rng.gen_range(0..n);
            let masked: HashSet<usize> = (0..n)
                .filter(|&c| c != pos && rng.gen_bool(0.2))
                .collect();
            let got = rank_pessimistic(&scores, pos, |c| masked.contains(&c));
            let want = oracle_rank(&scores, pos, &masked);
            assert_eq!(got, want, "scores {scores:?} pos {pos} masked {masked:?}");
        }
    }

    // Ranks depend only on score order: a strictly monotone transform
    // leaves them unchanged.
    #[test]
    fn rank_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(2..40);
            let scores: Vec<f32> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let transformed: Vec<f32> =
                scores.iter().map(|&s| (0.5 * s).exp() + 1.0).collect();
            let pos = rng.gen_range(0..n);
            assert_eq!(
                rank_pessimistic(&scores, pos, |_| false),
                rank_pessimistic(&transformed, pos, |_| false)
            );
        }
    }

    // Filtering can only improve the positive's rank.
    #[test]
    fn filtering_never_hurts() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let n = rng.gen_range(2..40);
            let scores: Vec<f32> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let pos = rng.gen_range(0..n);
            let masked: HashSet<usize> = (0..n)
                .filter(|&c| c != pos && rng.gen_bool(0.3))
                .collect();
            let unfiltered = rank_pessimistic(&scores, pos, |_| false).0;
            let filtered = rank_pessimistic(&scores, pos, |c| masked.contains(&c)).0;
            assert!(filtered <= unfiltered);
        }
    }

    /// Tiny deterministic setup: 3 entities on a line, TransE_L1 d=2.
    fn toy_view() -> (ModelConfig, Vec<f32>, Vec<f32>) {
        let cfg = ModelConfig::new(ModelKind::TransEL1, 2).unwrap();
        // entity i at (i, 0); relation = (1, 0): i -r-> i+1 scores 0
        let entities = vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0];
        let relations = vec![1.0, 0.0];
        (cfg, entities, relations)
    }

    #[test]
    fn filtered_rank_on_toy_graph() {
        let (cfg, entities, relations) = toy_view();
        let view = EmbeddingView {
            config: &cfg,
            entities: &entities,
            relations: &relations,
        };
        let test = TripletStore::from_columns(vec![1], vec![0], vec![2], 3, 1).unwrap();
        let all =
            TripletStore::from_columns(vec![0, 1], vec![0, 0], vec![1, 2], 3, 1).unwrap();
        // tail side: candidates of (1, r, ?) score -|2 - c|; entity 2
        // scores 0, the unique maximum
        let result = rank_filtered(view, &test, &all, EvalSide::Tail).unwrap();
        assert_eq!(result.ranks, vec![1]);
        assert_eq!(result.candidate_counts, vec![3]);
    }

    // Random-instance parity with a brute-force scorer that sorts
    // explicitly.
    #[test]
    fn filtered_matches_brute_force_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let nv = 20usize;
        let nr = 3usize;
        let d = 6usize;
        let cfg = ModelConfig::new(ModelKind::DistMult, d).unwrap();
        let entities: Vec<f32> = (0..nv * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let relations: Vec<f32> = (0..nr * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let view = EmbeddingView {
            config: &cfg,
            entities: &entities,
            relations: &relations,
        };
        let n_all = 60;
        let heads: Vec<u64> = (0..n_all).map(|_| rng.gen_range(0..nv as u64)).collect();
        let rels: Vec<u64> = (0..n_all).map(|_| rng.gen_range(0..nr as u64)).collect();
        let tails: Vec<u64> = (0..n_all).map(|_| rng.gen_range(0..nv as u64)).collect();
        let all =
            TripletStore::from_columns(heads.clone(), rels.clone(), tails.clone(), nv, nr)
                .unwrap();
        let test = TripletStore::from_columns(
            heads[..10].to_vec(),
            rels[..10].to_vec(),
            tails[..10].to_vec(),
            nv,
            nr,
        )
        .unwrap();
        let got = rank_filtered(view, &test, &all, EvalSide::Both).unwrap();

        // oracle: explicit per-candidate scoring + sort, both sides
        let mut want_ranks = Vec::new();
        for mode in [CorruptSide::Tail, CorruptSide::Head] {
            for i in 0..test.len() {
                let (h, r, t) = test.triplet(i);
                let (target, fixed) = match mode {
                    CorruptSide::Tail => (t, h),
                    CorruptSide::Head => (h, t),
                };
                let mut scores = Vec::new();
                for c in 0..nv as u64 {
                    let s = match mode {
                        CorruptSide::Tail => models::score(
                            &cfg,
                            view.entity(fixed),
                            view.relation(r),
                            view.entity(c),
                        ),
                        CorruptSide::Head => models::score(
                            &cfg,
                            view.entity(c),
                            view.relation(r),
                            view.entity(fixed),
                        ),
                    }
                    .unwrap();
                    scores.push(s);
                }
                let masked: HashSet<usize> = (0..nv)
                    .filter(|&c| {
                        c as u64 != target
                            && match mode {
                                CorruptSide::Tail => {
                                    all.triplet_exists(h, r, c as u64).unwrap()
                                }
                                CorruptSide::Head => {
                                    all.triplet_exists(c as u64, r, t).unwrap()
                                }
                            }
                    })
                    .collect();
                want_ranks.push(oracle_rank(&scores, target as usize, &masked).0);
            }
        }
        assert_eq!(got.ranks, want_ranks);
    }

    #[test]
    fn pooled_mrr_is_mean_of_sides() {
        let (cfg, entities, relations) = toy_view();
        let view = EmbeddingView {
            config: &cfg,
            entities: &entities,
            relations: &relations,
        };
        let test = TripletStore::from_columns(vec![0], vec![0], vec![1], 3, 1).unwrap();
        let all = test.clone();
        let tail = rank_filtered(view, &test, &all, EvalSide::Tail).unwrap();
        let head = rank_filtered(view, &test, &all, EvalSide::Head).unwrap();
        let both = rank_filtered(view, &test, &all, EvalSide::Both).unwrap();
        let m_tail = metrics(&tail).unwrap();
        let m_head = metrics(&head).unwrap();
        let m_both = metrics(&both).unwrap();
        assert!((m_both.mrr - 0.5 * (m_tail.mrr + m_head.mrr)).abs() < 1e-12);
    }

    #[test]
    fn sampled_candidate_count_fixed() {
        let (cfg, entities, relations) = toy_view();
        let view = EmbeddingView {
            config: &cfg,
            entities: &entities,
            relations: &relations,
        };
        let test =
            TripletStore::from_columns(vec![0, 1], vec![0, 0], vec![1, 2], 3, 1).unwrap();
        let result = rank_sampled(view, &test, &test, 50, 50, EvalSide::Both, 7).unwrap();
        assert_eq!(result.ranks.len(), 4);
        assert!(result.candidate_counts.iter().all(|&c| c == 101));
    }

    #[test]
    fn sampled_deterministic_for_seed() {
        let (cfg, entities, relations) = toy_view();
        let view = EmbeddingView {
            config: &cfg,
            entities: &entities,
            relations: &relations,
        };
        let test =
            TripletStore::from_columns(vec![0, 1], vec![0, 0], vec![1, 2], 3, 1).unwrap();
        let a = rank_sampled(view, &test, &test, 20, 20, EvalSide::Both, 9).unwrap();
        let b = rank_sampled(view, &test, &test, 20, 20, EvalSide::Both, 9).unwrap();
        assert_eq!(a.ranks, b.ranks);
    }

    // Counting oracle: degree-proportional draws match empirical
    // frequencies within 2%.
    #[test]
    fn degree_sampler_proportional() {
        let store = TripletStore::from_columns(
            vec![0, 0, 0, 1, 2],
            vec![0; 5],
            vec![1, 2, 3, 3, 3],
            4,
            1,
        )
        .unwrap();
        // degrees: e0=3, e1=2, e2=2, e3=3 -> total 10
        let sampler = DegreeSampler::new(&store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0u64; 4];
        let draws = 1_000_000;
        for _ in 0..draws {
            counts[sampler.sample(&mut rng) as usize] += 1;
        }
        let want = [0.3, 0.2, 0.2, 0.3];
        for e in 0..4 {
            let got = counts[e] as f64 / draws as f64;
            assert!((got - want[e]).abs() < 0.02, "e{e}: {got} vs {}", want[e]);
        }
    }

    #[test]
    fn vocab_mismatch_rejected() {
        let (cfg, entities, relations) = toy_view();
        let view = EmbeddingView {
            config: &cfg,
            entities: &entities,
            relations: &relations,
        };
        // store with more entities than the table has rows
        let test = TripletStore::from_columns(vec![0], vec![0], vec![5], 9, 1).unwrap();
        assert!(rank_filtered(view, &test, &test, EvalSide::Both).is_err());
    }
}
