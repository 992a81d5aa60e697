//! HTTP API over review sessions stored on disk.
//!
//! See [`api`] for the routes. [`serve`] runs the service from a
//! [`ServiceConfig`].

pub mod api;
pub mod config;
pub mod error;

pub use api::{router, AppState};
pub use config::{Principal, Role, ServiceConfig};
pub use error::ApiError;

/// Bind and serve until the process is stopped.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    std::fs::create_dir_all(&config.data_dir)?;
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    axum::serve(listener, router(AppState::from_config(&config))).await
}
