//! Job-oriented HTTP service over the note pipeline.
//!
//! Each job lives in `<jobs_root>/<id>/` with `status.json`, `scheme.json`,
//! `transcript.json` and `assets/`. Status updates are written by rename so
//! readers always see a whole document.

mod jobs;
mod routes;

use std::net::SocketAddr;
use std::path::PathBuf;

use noteforge_core::Config;

pub use jobs::{JobError, JobStatus, STATUS_FILE};
pub use routes::{router, AppState};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("BIND_FAILURE: {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] noteforge_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    pub jobs_root: PathBuf,
    pub config: Config,
    pub mock: bool,
    /// Served at `/`; a built-in index page when unset.
    pub static_dir: Option<PathBuf>,
}

/// Validate provider settings, bind and serve until the process stops.
pub async fn serve(opts: ServeOptions) -> Result<(), ServeError> {
    let state = AppState::new(opts.jobs_root, opts.config, opts.mock, opts.static_dir)?;
    let listener = tokio::net::TcpListener::bind(opts.addr)
        .await
        .map_err(|source| ServeError::Bind { addr: opts.addr, source })?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
