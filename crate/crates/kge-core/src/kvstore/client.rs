//! Sharded push/pull client.
//!
//! Ids are striped across servers (storage id mod S); relation ids pass
//! through the shard map's permutation first so hot relations don't pin a
//! single server. Requests touching several servers are issued
//! concurrently and reassembled in request order. A shard whose tables
//! live in this process is short-circuited: the client touches the shared
//! tables directly and no socket frame is produced, which the
//! `socket_frames` counter makes observable.

use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::server::HostTables;
use super::table::ADAGRAD_EPS;
use super::wire::{read_frame, write_frame, WireMessage};
use super::ShardMap;
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Rows fetched from one server, tagged with their request slots.
type SlottedRows = Vec<(usize, Vec<f32>)>;

/// Where one shard's server lives.
pub enum ServerAddr {
    Remote(String),
    /// Same host: operate on the shared tables directly.
    Local(Arc<HostTables>),
}

enum ServerConn {
    Remote(Mutex<TcpStream>),
    Local(Arc<HostTables>),
}

pub struct KvClient {
    shard: ShardMap,
    conns: Vec<ServerConn>,
    widths: Vec<usize>,
    rows: Vec<usize>,
    socket_frames: AtomicU64,
}

impl KvClient {
    /// Connect to every shard server. `widths[t]` and `rows[t]` give the
    /// registered geometry of table t (shared out-of-band, like the shard
    /// map itself).
    pub fn connect(
        addrs: Vec<ServerAddr>,
        shard: ShardMap,
        widths: Vec<usize>,
        rows: Vec<usize>,
        timeout: Duration,
    ) -> Result<Self> {
        if addrs.len() != shard.servers {
            return Err(Error::InvalidConfig(format!(
                "{} addresses for {} shards",
                addrs.len(),
                shard.servers
            )));
        }
        let mut conns = Vec::with_capacity(addrs.len());
        for addr in addrs {
            conns.push(match addr {
                ServerAddr::Local(tables) => ServerConn::Local(tables),
                ServerAddr::Remote(a) => {
                    let stream = TcpStream::connect(&a)
                        .map_err(|e| Error::Transport(format!("connect {a}: {e}")))?;
                    stream
                        .set_read_timeout(Some(timeout))
                        .and_then(|_| stream.set_write_timeout(Some(timeout)))
                        .and_then(|_| stream.set_nodelay(true))
                        .map_err(|e| Error::Transport(format!("socket opts: {e}")))?;
                    ServerConn::Remote(Mutex::new(stream))
                }
            });
        }
        Ok(Self {
            shard,
            conns,
            widths,
            rows,
            socket_frames: AtomicU64::new(0),
        })
    }

    /// Socket frames sent or received so far (excludes short-circuited
    /// local operations).
    pub fn socket_frames(&self) -> u64 {
        self.socket_frames.load(Ordering::Relaxed)
    }

    pub fn width(&self, table_id: u16) -> usize {
        self.widths[table_id as usize]
    }

    pub fn rows(&self, table_id: u16) -> usize {
        self.rows[table_id as usize]
    }

    /// Split request slots by owning server. Returns per-server
    /// (original slot, storage id) lists.
    fn partition_ids(&self, table_id: u16, ids: &[u64]) -> Vec<Vec<(usize, u64)>> {
        let mut by_server: Vec<Vec<(usize, u64)>> = vec![Vec::new(); self.shard.servers];
        for (slot, &id) in ids.iter().enumerate() {
            let storage = self.shard.storage_id(table_id, id);
            by_server[self.shard.server_of(storage)].push((slot, storage));
        }
        by_server
    }

    /// Fetch rows in request order; duplicates allowed.
    pub fn pull(&self, table_id: u16, ids: &[u64]) -> Result<Vec<f32>> {
        let d = self.width(table_id);
        let mut out = vec![0.0f32; ids.len() * d];
        if ids.is_empty() {
            return Ok(out);
        }
        let by_server = self.partition_ids(table_id, ids);
        let involved: Vec<usize> = (0..self.conns.len())
            .filter(|&s| !by_server[s].is_empty())
            .collect();
        if involved.len() == 1 {
            let s = involved[0];
            self.pull_from(s, table_id, &by_server[s], d, &mut out)?;
            return Ok(out);
        }
        // scatter the output buffer across server threads; slot ranges are
        // disjoint so each thread writes its own rows
        let results: Vec<Result<SlottedRows>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for &s in &involved {
                let slots = &by_server[s];
                handles.push(scope.spawn(move || {
                    let mut buf = vec![0.0f32; slots.len() * d];
                    self.pull_rows(s, table_id, slots, d, &mut buf)?;
                    Ok(slots
                        .iter()
                        .enumerate()
                        .map(|(i, &(slot, _))| (slot, buf[i * d..(i + 1) * d].to_vec()))
                        .collect())
                }));
            }
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in results {
            for (slot, row) in r? {
                out[slot * d..(slot + 1) * d].copy_from_slice(&row);
            }
        }
        Ok(out)
    }

    fn pull_from(
        &self,
        server: usize,
        table_id: u16,
        slots: &[(usize, u64)],
        d: usize,
        out: &mut [f32],
    ) -> Result<()> {
        let mut buf = vec![0.0f32; slots.len() * d];
        self.pull_rows(server, table_id, slots, d, &mut buf)?;
        for (i, &(slot, _)) in slots.iter().enumerate() {
            out[slot * d..(slot + 1) * d].copy_from_slice(&buf[i * d..(i + 1) * d]);
        }
        Ok(())
    }

    fn pull_rows(
        &self,
        server: usize,
        table_id: u16,
        slots: &[(usize, u64)],
        d: usize,
        buf: &mut [f32],
    ) -> Result<()> {
        let storage_ids: Vec<u64> = slots.iter().map(|&(_, sid)| sid).collect();
        match &self.conns[server] {
            ServerConn::Local(tables) => {
                tables.table(table_id)?.pull_into(&storage_ids, buf)?;
            }
            ServerConn::Remote(stream) => {
                let mut stream = stream.lock().unwrap();
                write_frame(
                    &mut stream,
                    &WireMessage::PullReq {
                        table_id,
                        ids: storage_ids.clone(),
                    },
                )?;
                self.socket_frames.fetch_add(1, Ordering::Relaxed);
                match read_frame(&mut stream)? {
                    Some(WireMessage::PullResp { ids, rows, .. }) => {
                        self.socket_frames.fetch_add(1, Ordering::Relaxed);
                        if ids != storage_ids || rows.len() != storage_ids.len() * d {
                            return Err(Error::Protocol(
                                "pull response does not match request".into(),
                            ));
                        }
                        buf.copy_from_slice(&rows);
                    }
                    Some(WireMessage::Error) => {
                        return Err(Error::Protocol("server reported error".into()))
                    }
                    other => {
                        return Err(Error::Protocol(format!(
                            "unexpected pull response: {other:?}"
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Send gradients; the receiving server applies the optimizer. The
    /// call returns once every involved server has accepted its frame.
    pub fn push(&self, table_id: u16, ids: &[u64], grads: &[f32], lr: f32) -> Result<()> {
        let d = self.width(table_id);
        if grads.len() != ids.len() * d {
            return Err(Error::ShapeMismatch(format!(
                "push payload {} != {} rows x width {d}",
                grads.len(),
                ids.len()
            )));
        }
        let by_server = self.partition_ids(table_id, ids);
        for (s, slots) in by_server.iter().enumerate() {
            if slots.is_empty() {
                continue;
            }
            let storage_ids: Vec<u64> = slots.iter().map(|&(_, sid)| sid).collect();
            let mut payload = Vec::with_capacity(slots.len() * d);
            for &(slot, _) in slots {
                payload.extend_from_slice(&grads[slot * d..(slot + 1) * d]);
            }
            match &self.conns[s] {
                ServerConn::Local(tables) => {
                    tables.table(table_id)?.sparse_push_adagrad(
                        &storage_ids,
                        &payload,
                        lr,
                        ADAGRAD_EPS,
                    )?;
                }
                ServerConn::Remote(stream) => {
                    let mut stream = stream.lock().unwrap();
                    write_frame(
                        &mut stream,
                        &WireMessage::Push {
                            table_id,
                            ids: storage_ids,
                            lr,
                            grads: payload,
                        },
                    )?;
                    self.socket_frames.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        Ok(())
    }

    /// Enter the cluster-wide barrier (server 0 coordinates).
    pub fn barrier(&self) -> Result<()> {
        match &self.conns[0] {
            ServerConn::Local(tables) => {
                tables.barrier().wait();
                Ok(())
            }
            ServerConn::Remote(stream) => {
                let mut stream = stream.lock().unwrap();
                write_frame(&mut stream, &WireMessage::BarrierReq)?;
                self.socket_frames.fetch_add(1, Ordering::Relaxed);
                match read_frame(&mut stream)? {
                    Some(WireMessage::BarrierResp) => {
                        self.socket_frames.fetch_add(1, Ordering::Relaxed);
                        Ok(())
                    }
                    other => Err(Error::Protocol(format!(
                        "unexpected barrier response: {other:?}"
                    ))),
                }
            }
        }
    }

    /// Ask every remote server to shut down.
    pub fn shutdown_servers(&self) -> Result<()> {
        for conn in &self.conns {
            if let ServerConn::Remote(stream) = conn {
                let mut stream = stream.lock().unwrap();
                write_frame(&mut stream, &WireMessage::Shutdown)?;
                self.socket_frames.fetch_add(1, Ordering::Relaxed);
            }
        }
        Ok(())
    }
}
