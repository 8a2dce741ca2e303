//! Embedding storage and synchronization.
//!
//! Single-host training reads and writes [`EmbeddingTable`]s directly
//! through [`LocalStore`]. Distributed training swaps in a [`KvClient`]
//! speaking the push/pull wire protocol to [`serve`] endpoints; everything
//! above the [`EmbeddingStore`] trait is identical in both modes.

pub mod checkpoint;
pub mod client;
pub mod server;
pub mod table;
pub mod wire;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

pub use client::{KvClient, ServerAddr, DEFAULT_TIMEOUT};
pub use server::{serve, HostTables, ServerBarrier, ServerConfig, ServerHandle};
pub use table::{EmbeddingTable, ADAGRAD_EPS};
pub use wire::WireMessage;

/// Table id of the entity embedding table.
pub const TABLE_ENTITY: u16 = 0;
/// Table id of the relation parameter table.
pub const TABLE_RELATION: u16 = 1;

/// Uniform random bijection on relation ids; storage id = π(relation id).
///
/// Long-tailed relation frequencies would otherwise pin the hottest
/// relations to fixed servers under mod-striding.
pub fn reshuffle_relations(n_rel: usize, seed: u64) -> Vec<u64> {
    let mut perm: Vec<u64> = (0..n_rel as u64).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// Routing of ids to servers: stride by storage id mod S, with relation
/// ids passed through a reshuffling permutation first.
#[derive(Debug, Clone)]
pub struct ShardMap {
    pub servers: usize,
    rel_perm: Vec<u64>,
}

impl ShardMap {
    pub fn new(servers: usize, n_rel: usize, seed: u64) -> Self {
        Self {
            servers: servers.max(1),
            rel_perm: reshuffle_relations(n_rel, seed),
        }
    }

    pub fn identity(servers: usize, n_rel: usize) -> Self {
        Self {
            servers: servers.max(1),
            rel_perm: (0..n_rel as u64).collect(),
        }
    }

    pub fn rel_perm(&self) -> &[u64] {
        &self.rel_perm
    }

    pub fn storage_id(&self, table_id: u16, id: u64) -> u64 {
        if table_id == TABLE_RELATION {
            self.rel_perm[id as usize]
        } else {
            id
        }
    }

    pub fn server_of(&self, storage_id: u64) -> usize {
        (storage_id % self.servers as u64) as usize
    }
}

/// Uniform surface over local tables and the distributed client; the
/// trainer is written against this and never knows which one it has.
pub trait EmbeddingStore: Send + Sync {
    fn width(&self, table_id: u16) -> usize;
    fn rows(&self, table_id: u16) -> usize;
    fn pull(&self, table_id: u16, ids: &[u64]) -> Result<Vec<f32>>;
    fn push(&self, table_id: u16, ids: &[u64], grads: &[f32], lr: f32) -> Result<()>;
    /// Cross-process synchronization point; a no-op for purely local
    /// deployments (worker threads rendezvous separately).
    fn sync_barrier(&self) -> Result<()>;
}

/// In-process table pair with hogwild access.
pub struct LocalStore {
    pub entities: Arc<EmbeddingTable>,
    pub relations: Arc<EmbeddingTable>,
}

impl LocalStore {
    pub fn new(entities: EmbeddingTable, relations: EmbeddingTable) -> Self {
        Self {
            entities: Arc::new(entities),
            relations: Arc::new(relations),
        }
    }

    fn table(&self, table_id: u16) -> &Arc<EmbeddingTable> {
        match table_id {
            TABLE_ENTITY => &self.entities,
            TABLE_RELATION => &self.relations,
            other => panic!("unknown table id {other}"),
        }
    }
}

impl EmbeddingStore for LocalStore {
    fn width(&self, table_id: u16) -> usize {
        self.table(table_id).width()
    }

    fn rows(&self, table_id: u16) -> usize {
        self.table(table_id).rows()
    }

    fn pull(&self, table_id: u16, ids: &[u64]) -> Result<Vec<f32>> {
        self.table(table_id).sparse_pull(ids)
    }

    fn push(&self, table_id: u16, ids: &[u64], grads: &[f32], lr: f32) -> Result<()> {
        self.table(table_id)
            .sparse_push_adagrad(ids, grads, lr, ADAGRAD_EPS)
    }

    fn sync_barrier(&self) -> Result<()> {
        Ok(())
    }
}

impl EmbeddingStore for KvClient {
    fn width(&self, table_id: u16) -> usize {
        KvClient::width(self, table_id)
    }

    fn rows(&self, table_id: u16) -> usize {
        KvClient::rows(self, table_id)
    }

    fn pull(&self, table_id: u16, ids: &[u64]) -> Result<Vec<f32>> {
        KvClient::pull(self, table_id, ids)
    }

    fn push(&self, table_id: u16, ids: &[u64], grads: &[f32], lr: f32) -> Result<()> {
        KvClient::push(self, table_id, ids, grads, lr)
    }

    fn sync_barrier(&self) -> Result<()> {
        self.barrier()
    }
}

/// Build the standard entity/relation table pair for a model. Row
/// contents depend only on (seed, table, logical id), so any sharded
/// deployment initialized through here matches the local tables bit for
/// bit.
pub fn init_tables(
    n_entities: usize,
    n_relations: usize,
    dim: usize,
    rel_dim: usize,
    init_bound: f32,
    seed: u64,
) -> Result<(EmbeddingTable, EmbeddingTable)> {
    let entities = EmbeddingTable::init(n_entities, dim, init_bound, seed)?;
    let relations = EmbeddingTable::init(n_relations, rel_dim, init_bound, seed ^ 0x7265_6c73)?;
    Ok((entities, relations))
}
