//! HTTP annotation service: sessions, an append-only label log and the
//! feedback source that lets an experiment wait on human labels.

pub mod error;
pub mod feedback;
pub mod http;
pub mod log;
pub mod session;

pub use error::ServiceError;
pub use feedback::SessionFeedback;
pub use http::{router, AppState};
pub use session::{Progress, Session, SessionMode, SessionStatus, SessionStore};

use std::net::SocketAddr;

/// Binds `addr` and serves until the process ends.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, state).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    ::log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
