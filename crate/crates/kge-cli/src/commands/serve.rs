//! `kge serve`
//!
//! Hosts embedding tables behind one or more wire-protocol endpoints in a
//! single process; all endpoints share the same tables. Runs until a
//! client sends SHUTDOWN.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::anyhow;
use clap::Args;

use kge_core::kvstore::{serve, EmbeddingTable, HostTables, ServerConfig};

use crate::config::{resolve, resolve_opt, ConfigFile};
use crate::{CmdError, CmdResult, ConfigArg};

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Comma-separated endpoints to bind (all share this host's tables).
    #[arg(long)]
    endpoint: Option<String>,
    /// Table spec file: entities, relations, dim, rel_dim, init_bound,
    /// seed, clients.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Gradient-applier workers per endpoint.
    #[arg(long)]
    servers: Option<usize>,
    #[command(flatten)]
    config: ConfigArg,
}

pub fn run(args: ServeArgs) -> CmdResult {
    let file = args.config.load()?;
    let endpoints = resolve(args.endpoint, &file, "endpoint", "127.0.0.1:9090".into())
        .map_err(CmdError::usage)?;
    let spec_path = resolve_opt(args.tables, &file, "tables", None)
        .map_err(CmdError::usage)?
        .ok_or_else(|| CmdError::usage(anyhow!("--tables <spec file> is required")))?;
    let workers = resolve(args.servers, &file, "servers", 2).map_err(CmdError::usage)?;

    let spec = ConfigFile::load(&spec_path).map_err(CmdError::usage)?;
    let need = |key: &str| -> Result<usize, CmdError> {
        spec.get::<usize>(key)
            .map_err(CmdError::usage)?
            .ok_or_else(|| CmdError::usage(anyhow!("table spec missing {key}")))
    };
    let n_entities = need("entities")?;
    let n_relations = need("relations")?;
    let dim = need("dim")?;
    let rel_dim = need("rel_dim")?;
    let init_bound: f32 = spec
        .get("init_bound")
        .map_err(CmdError::usage)?
        .unwrap_or(0.0);
    let seed: u64 = spec.get("seed").map_err(CmdError::usage)?.unwrap_or(0);
    let clients: usize = spec.get("clients").map_err(CmdError::usage)?.unwrap_or(1);

    let entities = EmbeddingTable::init(n_entities, dim, init_bound, seed)?;
    let relations = EmbeddingTable::init(n_relations, rel_dim, init_bound, seed ^ 0x7265_6c73)?;
    let tables = Arc::new(HostTables::new(vec![entities, relations], clients));

    let mut handles = Vec::new();
    for endpoint in endpoints.split(',') {
        let handle = serve(
            endpoint.trim(),
            tables.clone(),
            ServerConfig {
                apply_workers: workers,
            },
        )
        .map_err(CmdError::bind)?;
        eprintln!("serving on {}", handle.addr());
        handles.push(handle);
    }
    for handle in &mut handles {
        handle.join();
    }
    eprintln!("shutdown received, exiting");
    Ok(())
}
