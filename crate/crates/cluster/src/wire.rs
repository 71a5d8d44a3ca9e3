//! Framed coordinator/worker protocol.
//!
//! A frame is a 4-byte big-endian payload length followed by a UTF-8 JSON
//! object `{"v":1,"kind":"<Variant>",...}`.

use logq_core::catalog::{PartitionMeta, StorageMode, TableSchema};
use logq_core::engine::{FragmentResult, PhysicalPlan, QueryResult};
use logq_core::{ErrorCode, QueryError};
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use crate::status::ClusterStatus;

pub const PROTOCOL_VERSION: u32 = 1;
/// Largest accepted payload. Broadcast tables are bounded by the join
/// threshold, which stays well below this.
pub const MAX_FRAME_BYTES: u32 = 512 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum WireMessage {
    /// Worker → coordinator, first message on a worker connection.
    Register {
        worker_id: String,
        cores: u32,
    },
    Registered {
        worker_id: String,
    },
    /// Load the listed byte ranges of `source` (relative to the data root).
    AssignLoad {
        table: String,
        schema: TableSchema,
        source: String,
        partitions: Vec<PartitionMeta>,
    },
    /// Whole small table; partition ranges index into `content`.
    Broadcast {
        table: String,
        schema: TableSchema,
        content: String,
        partitions: Vec<PartitionMeta>,
    },
    Cache {
        table: String,
    },
    /// Acknowledges AssignLoad, Broadcast, Cache and LoadTable.
    Loaded {
        table: String,
        partitions: u32,
        rows: u64,
        cached: bool,
    },
    Exec {
        query_id: u64,
        plan: PhysicalPlan,
        partitions: Vec<u32>,
    },
    Fragment {
        fragment: FragmentResult,
    },
    Err {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        query_id: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        partition_id: Option<u32>,
        code: ErrorCode,
        message: String,
    },
    Heartbeat,
    Shutdown,
    /// Client → coordinator.
    Submit {
        sql: String,
        mode: StorageMode,
    },
    Result {
        result: QueryResult,
    },
    StatusRequest,
    Status {
        status: ClusterStatus,
    },
    /// Client → coordinator: load `file` under the data root and distribute it.
    LoadTable {
        table: String,
        file: String,
        cache: bool,
    },
}

impl WireMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Register { .. } => "Register",
            WireMessage::Registered { .. } => "Registered",
            WireMessage::AssignLoad { .. } => "AssignLoad",
            WireMessage::Broadcast { .. } => "Broadcast",
            WireMessage::Cache { .. } => "Cache",
            WireMessage::Loaded { .. } => "Loaded",
            WireMessage::Exec { .. } => "Exec",
            WireMessage::Fragment { .. } => "Fragment",
            WireMessage::Err { .. } => "Err",
            WireMessage::Heartbeat => "Heartbeat",
            WireMessage::Shutdown => "Shutdown",
            WireMessage::Submit { .. } => "Submit",
            WireMessage::Result { .. } => "Result",
            WireMessage::StatusRequest => "StatusRequest",
            WireMessage::Status { .. } => "Status",
            WireMessage::LoadTable { .. } => "LoadTable",
        }
    }

    pub fn error(error: &QueryError, query_id: Option<u64>, partition_id: Option<u32>) -> Self {
        WireMessage::Err {
            query_id,
            partition_id,
            code: error.code,
            message: error.message.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    v: u32,
    #[serde(flatten)]
    msg: M,
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_BYTES} byte limit")]
    TooLarge(u64),
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported protocol version {0}")]
    Version(u32),
}

impl From<WireError> for QueryError {
    fn from(e: WireError) -> Self {
        QueryError::new(ErrorCode::Protocol, e.to_string())
    }
}

/// JSON payload without the length prefix.
pub fn encode_payload(msg: &WireMessage) -> Result<Vec<u8>, WireError> {
    let body = serde_json::to_vec(&Envelope {
        v: PROTOCOL_VERSION,
        msg,
    })?;
    if body.len() as u64 > MAX_FRAME_BYTES as u64 {
        return Err(WireError::TooLarge(body.len() as u64));
    }
    Ok(body)
}

pub fn decode_payload(payload: &[u8]) -> Result<WireMessage, WireError> {
    #[derive(Deserialize)]
    struct Version {
        v: u32,
    }
    let Version { v } = serde_json::from_slice(payload)?;
    if v != PROTOCOL_VERSION {
        return Err(WireError::Version(v));
    }
    let env: Envelope<WireMessage> = serde_json::from_slice(payload)?;
    Ok(env.msg)
}

/// Complete frame: length prefix plus payload.
pub fn encode_frame(msg: &WireMessage) -> Result<Vec<u8>, WireError> {
    let body = encode_payload(msg)?;
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<WireMessage, WireError> {
    if bytes.len() < 4 {
        return Err(WireError::Io(std::io::ErrorKind::UnexpectedEof.into()));
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if len > MAX_FRAME_BYTES {
        return Err(WireError::TooLarge(len as u64));
    }
    if bytes.len() - 4 != len as usize {
        return Err(WireError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("frame declares {len} bytes, {} present", bytes.len() - 4),
        )));
    }
    decode_payload(&bytes[4..])
}

/// Reads one frame; `Ok(None)` on a clean end of stream before a new frame.
pub async fn read_message<R: AsyncRead + Unpin>(
    r: &mut R,
) -> Result<Option<WireMessage>, WireError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_BYTES {
        return Err(WireError::TooLarge(len as u64));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).await?;
    decode_payload(&body).map(Some)
}

pub async fn write_message<W: AsyncWrite + Unpin>(
    w: &mut W,
    msg: &WireMessage,
) -> Result<(), WireError> {
    let frame = encode_frame(msg)?;
    w.write_all(&frame).await?;
    w.flush().await?;
    Ok(())
}
