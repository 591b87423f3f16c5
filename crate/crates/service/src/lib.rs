//! Study service: serves storyboard interactions to participants, applies
//! their feedback under the assigned condition and persists every session
//! as a replayable event log.

pub mod api;
pub mod error;
pub mod session;
pub mod store;
pub mod storyboard;

use std::net::SocketAddr;

pub use api::{router, AppState, ServiceConfig};
pub use error::ServiceError;

/// Bind `addr` and serve until Ctrl-C.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = AppState::open(&config)?;
    let app = router(state, config.static_dir.clone());
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| io_error(addr, e))?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| io_error(addr, e))
}

fn io_error(addr: SocketAddr, e: std::io::Error) -> ServiceError {
    ServiceError::Core(steerbench_core::Error::Transport {
        endpoint: addr.to_string(),
        message: e.to_string(),
    })
}
