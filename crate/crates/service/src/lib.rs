//! HTTP/JSON front end for ranking sessions: create a session, fetch the
//! candidates and their images, post top-k rankings, poll for the next
//! batch.

pub mod api;
pub mod config;
pub mod error;
pub mod generator;
pub mod state;
mod store;

use std::sync::Arc;

pub use api::router;
pub use config::ServiceConfig;
pub use error::{ApiError, Result};
pub use state::{AppState, Mode, SessionRecordEnvelope};

/// Carried by every response body.
pub const SCHEMA_VERSION: u32 = 1;

/// Binds `config.bind` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let bind = config.bind;
    let state = tokio::task::spawn_blocking(move || AppState::new(config))
        .await
        .map_err(std::io::Error::other)?
        .map_err(std::io::Error::other)?;
    let app = router(Arc::new(state));
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
