//! Binary wire protocol for the embedding store.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! u32  frame byte length (transport prefix, not counted below)
//! u32  magic 0x4B474531
//! u8   msg_type  1=PULL_REQ 2=PULL_RESP 3=PUSH 4=BARRIER_REQ
//!                5=BARRIER_RESP 6=SHUTDOWN 7=ERROR
//! u16  table_id
//! u32  count
//! count × u64   ids
//! PUSH only:      f32 lr
//! PULL_RESP/PUSH: count×d × f32 row payload
//! ```
//!
//! The row width d is fixed at table registration and known to both ends
//! out of band, so the payload length implies it.

use std::io::{Read, Write};
use std::net::TcpStream;

use crate::error::{Error, Result};

pub const MAGIC: u32 = 0x4B47_4531;

/// Hard cap on accepted frame size; a frame beyond this is a protocol
/// violation, not a plausible workload.
pub const MAX_FRAME_BYTES: usize = 1 << 30;

pub const MSG_PULL_REQ: u8 = 1;
pub const MSG_PULL_RESP: u8 = 2;
pub const MSG_PUSH: u8 = 3;
pub const MSG_BARRIER_REQ: u8 = 4;
pub const MSG_BARRIER_RESP: u8 = 5;
pub const MSG_SHUTDOWN: u8 = 6;
pub const MSG_ERROR: u8 = 7;

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    PullReq {
        table_id: u16,
        ids: Vec<u64>,
    },
    PullResp {
        table_id: u16,
        ids: Vec<u64>,
        rows: Vec<f32>,
    },
    Push {
        table_id: u16,
        ids: Vec<u64>,
        lr: f32,
        grads: Vec<f32>,
    },
    BarrierReq,
    BarrierResp,
    Shutdown,
    Error,
}

impl WireMessage {
    fn msg_type(&self) -> u8 {
        match self {
            WireMessage::PullReq { .. } => MSG_PULL_REQ,
            WireMessage::PullResp { .. } => MSG_PULL_RESP,
            WireMessage::Push { .. } => MSG_PUSH,
            WireMessage::BarrierReq => MSG_BARRIER_REQ,
            WireMessage::BarrierResp => MSG_BARRIER_RESP,
            WireMessage::Shutdown => MSG_SHUTDOWN,
            WireMessage::Error => MSG_ERROR,
        }
    }

    fn ids(&self) -> &[u64] {
        match self {
            WireMessage::PullReq { ids, .. }
            | WireMessage::PullResp { ids, .. }
            | WireMessage::Push { ids, .. } => ids,
            _ => &[],
        }
    }

    fn table_id(&self) -> u16 {
        match self {
            WireMessage::PullReq { table_id, .. }
            | WireMessage::PullResp { table_id, .. }
            | WireMessage::Push { table_id, .. } => *table_id,
            _ => 0,
        }
    }

    /// Serialize the frame body (without the transport length prefix).
    pub fn encode(&self) -> Result<Vec<u8>> {
        let ids = self.ids();
        if ids.len() > u32::MAX as usize {
            return Err(Error::Protocol("id count exceeds u32".into()));
        }
        let payload: &[f32] = match self {
            WireMessage::PullResp { rows, .. } => rows,
            WireMessage::Push { grads, .. } => grads,
            _ => &[],
        };
        if !ids.is_empty() && payload.len() % ids.len() != 0 {
            return Err(Error::Protocol(format!(
                "payload {} not a multiple of id count {}",
                payload.len(),
                ids.len()
            )));
        }
        let mut buf = Vec::with_capacity(11 + ids.len() * 8 + payload.len() * 4 + 4);
        buf.extend_from_slice(&MAGIC.to_le_bytes());
        buf.push(self.msg_type());
        buf.extend_from_slice(&self.table_id().to_le_bytes());
        buf.extend_from_slice(&(ids.len() as u32).to_le_bytes());
        for id in ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        if let WireMessage::Push { lr, .. } = self {
            buf.extend_from_slice(&lr.to_le_bytes());
        }
        for x in payload {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        Ok(buf)
    }

    /// Parse a frame body produced by [`encode`](Self::encode).
    pub fn decode(buf: &[u8]) -> Result<WireMessage> {
        let mut c = Cursor { buf, at: 0 };
        let magic = c.u32()?;
        if magic != MAGIC {
            return Err(Error::Protocol(format!("bad magic {magic:#x}")));
        }
        let msg_type = c.u8()?;
        let table_id = c.u16()?;
        let count = c.u32()? as usize;
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            ids.push(c.u64()?);
        }
        let msg = match msg_type {
            MSG_PULL_REQ => WireMessage::PullReq { table_id, ids },
            MSG_PULL_RESP => {
                let rows = c.f32_rest()?;
                if count > 0 && rows.len() % count != 0 {
                    return Err(Error::Protocol(format!(
                        "PULL_RESP payload {} not a multiple of count {count}",
                        rows.len()
                    )));
                }
                WireMessage::PullResp {
                    table_id,
                    ids,
                    rows,
                }
            }
            MSG_PUSH => {
                let lr = c.f32()?;
                let grads = c.f32_rest()?;
                if count > 0 && grads.len() % count != 0 {
                    return Err(Error::Protocol(format!(
                        "PUSH payload {} not a multiple of count {count}",
                        grads.len()
                    )));
                }
                WireMessage::Push {
                    table_id,
                    ids,
                    lr,
                    grads,
                }
            }
            MSG_BARRIER_REQ => WireMessage::BarrierReq,
            MSG_BARRIER_RESP => WireMessage::BarrierResp,
            MSG_SHUTDOWN => WireMessage::Shutdown,
            MSG_ERROR => WireMessage::Error,
            other => return Err(Error::Protocol(format!("unknown msg_type {other}"))),
        };
        if c.at != buf.len() {
            return Err(Error::Protocol(format!(
                "{} trailing bytes after frame",
                buf.len() - c.at
            )));
        }
        Ok(msg)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::Protocol("truncated frame".into()));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32_rest(&mut self) -> Result<Vec<f32>> {
        let rest = &self.buf[self.at..];
        if rest.len() % 4 != 0 {
            return Err(Error::Protocol("payload not f32-aligned".into()));
        }
        self.at = self.buf.len();
        Ok(rest
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

/// Write one length-prefixed frame.
pub fn write_frame(stream: &mut TcpStream, msg: &WireMessage) -> Result<()> {
    let body = msg.encode()?;
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    stream
        .write_all(&out)
        .map_err(|e| Error::Transport(format!("write: {e}")))
}

/// Read one length-prefixed frame. Returns None on clean EOF at a frame
/// boundary.
pub fn read_frame(stream: &mut TcpStream) -> Result<Option<WireMessage>> {
    let mut len_buf = [0u8; 4];
    match stream.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::Transport(format!("read length: {e}"))),
    }
    let len = u32::from_le_bytes(len_buf) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!("frame of {len} bytes refused")));
    }
    let mut body = vec![0u8; len];
    stream
        .read_exact(&mut body)
        .map_err(|e| Error::Transport(format!("read body: {e}")))?;
    WireMessage::decode(&body).map(Some)
}
