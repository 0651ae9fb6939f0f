//! HTTP gateway over the credito ledgers.
//!
//! [`spawn`] replays the configured journal, starts the agent ticker and
//! serves the JSON API on the configured address until shut down.

pub mod api;
pub mod config;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use credito_core::journal::JournalError;
use credito_core::Engine;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use api::{endpoint_for, router, ApiError, Node, Shared};
pub use config::{ConfigError, ServiceConfig, Validated};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

/// Validates the configuration and replays the journal into a node.
pub fn open_node(config: &ServiceConfig) -> Result<(Shared, Validated), GatewayError> {
    let valid = config.validate()?;
    let engine = match &valid.journal {
        Some(path) => Engine::open(path, valid.engine)?,
        None => Engine::in_memory(valid.engine),
    };
    tracing::info!(head = %engine.journal().head(), "journal replayed");
    Ok((Arc::new(Node::new(engine, &valid)), valid))
}

/// A server running on the current tokio runtime.
#[derive(Debug)]
pub struct RunningServer {
    pub addr: SocketAddr,
    pub node: Shared,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<Result<(), GatewayError>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections, drains in-flight requests and waits.
    pub async fn shutdown(mut self) -> Result<(), GatewayError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.await.unwrap_or_else(|e| Err(GatewayError::Serve(std::io::Error::other(e))))
    }
}

pub async fn spawn(config: &ServiceConfig) -> Result<RunningServer, GatewayError> {
    let (node, valid) = open_node(config)?;
    let listener = TcpListener::bind(valid.listen).await.map_err(|source| GatewayError::Bind { addr: valid.listen, source })?;
    let addr = listener.local_addr().map_err(GatewayError::Serve)?;
    let (tx, rx) = oneshot::channel::<()>();

    let ticker_node = node.clone();
    let cadence = Duration::from_millis(valid.cadence_ms);
    let ticker = tokio::spawn(async move {
        let mut interval = tokio::time::interval(cadence);
        loop {
            interval.tick().await;
            ticker_node.tick_agents();
        }
    });

    let app = router(node.clone());
    let task = tokio::spawn(async move {
        let served = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
        ticker.abort();
        served.map_err(GatewayError::Serve)
    });
    tracing::info!(%addr, "gateway listening");
    Ok(RunningServer { addr, node, shutdown: Some(tx), task })
}

/// Serves until ctrl-c. Every accepted mutation is already synced to disk,
/// so shutdown only has to drain in-flight requests.
pub async fn serve(config: &ServiceConfig) -> Result<(), GatewayError> {
    let server = spawn(config).await?;
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
    server.shutdown().await
}
