//! Push/pull embedding server.
//!
//! One `serve` call owns one endpoint. All servers on a host are handed
//! the same [`HostTables`], so they share embeddings the way co-located
//! server processes would share memory; the shard map routes requests
//! across endpoints (id mod S) purely to spread load.
//!
//! Each connection is read by its own thread. PUSH frames are handed to an
//! applier lane (one of `apply_workers` threads, keyed by connection) so
//! that gradient application overlaps with reading the next frame; PULL
//! and BARRIER wait for the connection's pending pushes first, which keeps
//! read-your-writes per connection intact.

use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::table::{EmbeddingTable, ADAGRAD_EPS};
use super::wire::{read_frame, write_frame, WireMessage};
use crate::error::{Error, Result};

/// Rendezvous among a fixed number of participants. Used by the wire
/// BARRIER and by in-process clients sharing the tables.
pub struct ServerBarrier {
    expected: usize,
    state: Mutex<(usize, u64)>, // (arrived, generation)
    cv: Condvar,
}

impl ServerBarrier {
    pub fn new(expected: usize) -> Self {
        Self {
            expected: expected.max(1),
            state: Mutex::new((0, 0)),
            cv: Condvar::new(),
        }
    }

    pub fn wait(&self) {
        let mut st = self.state.lock().unwrap();
        st.0 += 1;
        if st.0 >= self.expected {
            st.0 = 0;
            st.1 += 1;
            self.cv.notify_all();
            return;
        }
        let gen = st.1;
        while st.1 == gen {
            st = self.cv.wait(st).unwrap();
        }
    }
}

/// The embedding tables living on one host, shared by every server
/// endpoint and in-process client on that host.
pub struct HostTables {
    tables: Vec<Arc<EmbeddingTable>>,
    barrier: ServerBarrier,
}

impl HostTables {
    pub fn new(tables: Vec<EmbeddingTable>, barrier_participants: usize) -> Self {
        Self {
            tables: tables.into_iter().map(Arc::new).collect(),
            barrier: ServerBarrier::new(barrier_participants),
        }
    }

    pub fn table(&self, table_id: u16) -> Result<&Arc<EmbeddingTable>> {
        self.tables
            .get(table_id as usize)
            .ok_or_else(|| Error::Protocol(format!("unregistered table {table_id}")))
    }

    pub fn barrier(&self) -> &ServerBarrier {
        &self.barrier
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Gradient-applier threads shared by this endpoint's connections.
    pub apply_workers: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { apply_workers: 2 }
    }
}

struct Pending {
    count: Mutex<u64>,
    cv: Condvar,
}

impl Pending {
    fn new() -> Self {
        Self {
            count: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    fn inc(&self) {
        *self.count.lock().unwrap() += 1;
    }

    fn dec(&self) {
        let mut c = self.count.lock().unwrap();
        *c -= 1;
        if *c == 0 {
            self.cv.notify_all();
        }
    }

    fn wait_zero(&self) {
        let mut c = self.count.lock().unwrap();
        while *c != 0 {
            c = self.cv.wait(c).unwrap();
        }
    }
}

struct ApplyJob {
    table: Arc<EmbeddingTable>,
    ids: Vec<u64>,
    grads: Vec<f32>,
    lr: f32,
    pending: Arc<Pending>,
}

/// Running server endpoint. Dropping the handle stops it.
pub struct ServerHandle {
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
    failed_pushes: Arc<AtomicU64>,
    tables: Arc<HostTables>,
}

impl ServerHandle {
    pub fn addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    pub fn tables(&self) -> &Arc<HostTables> {
        &self.tables
    }

    /// Pushes dropped because their ids or shapes were invalid.
    pub fn failed_pushes(&self) -> u64 {
        self.failed_pushes.load(Ordering::Relaxed)
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }

    /// Block until a SHUTDOWN frame (or `stop`) terminates the endpoint.
    pub fn join(&mut self) {
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Bind `endpoint` and serve the shared tables until SHUTDOWN.
pub fn serve(
    endpoint: &str,
    tables: Arc<HostTables>,
    cfg: ServerConfig,
) -> Result<ServerHandle> {
    let listener = TcpListener::bind(endpoint)
        .map_err(|e| Error::Transport(format!("bind {endpoint}: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| Error::Transport(format!("local_addr: {e}")))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::Transport(format!("nonblocking: {e}")))?;

    let stop = Arc::new(AtomicBool::new(false));
    let failed_pushes = Arc::new(AtomicU64::new(0));

    // applier lanes: a connection always lands on the same lane, so its
    // pushes apply in order
    let mut lanes: Vec<Sender<ApplyJob>> = Vec::new();
    for _ in 0..cfg.apply_workers.max(1) {
        let (tx, rx) = channel::<ApplyJob>();
        let failed = failed_pushes.clone();
        std::thread::spawn(move || {
            while let Ok(job) = rx.recv() {
                if job
                    .table
                    .sparse_push_adagrad(&job.ids, &job.grads, job.lr, ADAGRAD_EPS)
                    .is_err()
                {
                    failed.fetch_add(1, Ordering::Relaxed);
                }
                job.pending.dec();
            }
        });
        lanes.push(tx);
    }

    let accept_stop = stop.clone();
    let accept_tables = tables.clone();
    let accept_thread = std::thread::spawn(move || {
        let mut conn_id = 0usize;
        loop {
            if accept_stop.load(Ordering::SeqCst) {
                break;
            }
            match listener.accept() {
                Ok((stream, _)) => {
                    let lane = lanes[conn_id % lanes.len()].clone();
                    conn_id += 1;
                    let tables = accept_tables.clone();
                    let stop = accept_stop.clone();
                    std::thread::spawn(move || handle_connection(stream, tables, lane, stop));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(_) => break,
            }
        }
    });

    Ok(ServerHandle {
        addr,
        stop,
        accept_thread: Some(accept_thread),
        failed_pushes,
        tables,
    })
}

fn handle_connection(
    mut stream: TcpStream,
    tables: Arc<HostTables>,
    lane: Sender<ApplyJob>,
    stop: Arc<AtomicBool>,
) {
    let _ = stream.set_nodelay(true);
    let pending = Arc::new(Pending::new());
    loop {
        let msg = match read_frame(&mut stream) {
            Ok(Some(m)) => m,
            Ok(None) => break, // connection closed
            Err(_) => {
                let _ = write_frame(&mut stream, &WireMessage::Error);
                break;
            }
        };
        match msg {
            WireMessage::Push {
                table_id,
                ids,
                lr,
                grads,
            } => {
                let Ok(table) = tables.table(table_id) else {
                    let _ = write_frame(&mut stream, &WireMessage::Error);
                    break;
                };
                pending.inc();
                if lane
                    .send(ApplyJob {
                        table: table.clone(),
                        ids,
                        grads,
                        lr,
                        pending: pending.clone(),
                    })
                    .is_err()
                {
                    pending.dec();
                    break;
                }
            }
            WireMessage::PullReq { table_id, ids } => {
                pending.wait_zero();
                let resp = tables
                    .table(table_id)
                    .and_then(|t| t.sparse_pull(&ids))
                    .map(|rows| WireMessage::PullResp {
                        table_id,
                        ids,
                        rows,
                    });
                match resp {
                    Ok(resp) => {
                        if write_frame(&mut stream, &resp).is_err() {
                            break;
                        }
                    }
                    Err(_) => {
                        let _ = write_frame(&mut stream, &WireMessage::Error);
                        break;
                    }
                }
            }
            WireMessage::BarrierReq => {
                pending.wait_zero();
                tables.barrier().wait();
                if write_frame(&mut stream, &WireMessage::BarrierResp).is_err() {
                    break;
                }
            }
            WireMessage::Shutdown => {
                pending.wait_zero();
                stop.store(true, Ordering::SeqCst);
                break;
            }
            // clients never send these
            WireMessage::PullResp { .. } | WireMessage::BarrierResp | WireMessage::Error => {
                let _ = write_frame(&mut stream, &WireMessage::Error);
                break;
            }
        }
    }
    pending.wait_zero();
}
