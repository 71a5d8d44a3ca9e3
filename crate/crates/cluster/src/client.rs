use logq_core::catalog::StorageMode;
use logq_core::engine::QueryResult;
use logq_core::{ErrorCode, QueryError};
use tokio::net::TcpStream;

use crate::status::ClusterStatus;
use crate::wire::{read_message, write_message, WireMessage};

/// Talks to a remote coordinator, one connection per request.
#[derive(Debug, Clone)]
pub struct CoordinatorClient {
    addr: String,
}

impl CoordinatorClient {
    pub fn new(addr: impl Into<String>) -> Self {
        Self { addr: addr.into() }
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    async fn request(&self, msg: WireMessage) -> Result<WireMessage, QueryError> {
        let unavailable = |e: &dyn std::fmt::Display| {
            QueryError::new(
                ErrorCode::NoWorkers,
                format!("coordinator {}: {e}", self.addr),
            )
        };
        let mut stream = TcpStream::connect(&self.addr)
            .await
            .map_err(|e| unavailable(&e))?;
        write_message(&mut stream, &msg).await?;
        match read_message(&mut stream).await? {
            Some(WireMessage::Err { code, message, .. }) => Err(QueryError::new(code, message)),
            Some(reply) => Ok(reply),
            None => Err(unavailable(&"connection closed")),
        }
    }

    pub async fn submit(&self, sql: &str, mode: StorageMode) -> Result<QueryResult, QueryError> {
        match self
            .request(WireMessage::Submit {
                sql: sql.to_string(),
                mode,
            })
            .await?
        {
            WireMessage::Result { result } => Ok(result),
            other => Err(unexpected(&other)),
        }
    }

    pub async fn status(&self) -> Result<ClusterStatus, QueryError> {
        match self.request(WireMessage::StatusRequest).await? {
            WireMessage::Status { status } => Ok(status),
            other => Err(unexpected(&other)),
        }
    }

    /// Returns (partitions, rows, cached) of the loaded table.
    pub async fn load_table(
        &self,
        table: &str,
        file: &str,
        cache: bool,
    ) -> Result<(u32, u64, bool), QueryError> {
        match self
            .request(WireMessage::LoadTable {
                table: table.to_string(),
                file: file.to_string(),
                cache,
            })
            .await?
        {
            WireMessage::Loaded {
                partitions,
                rows,
                cached,
                ..
            } => Ok((partitions, rows, cached)),
            other => Err(unexpected(&other)),
        }
    }
}

fn unexpected(msg: &WireMessage) -> QueryError {
    QueryError::new(
        ErrorCode::Protocol,
        format!("unexpected {} reply", msg.kind()),
    )
}
