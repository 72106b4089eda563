//! Local transcription service: sessions over HTTP plus the model pipeline
//! used by the `hieroscribe` command-line tool.

pub mod api;
pub mod backend;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod session;

pub use api::{router, AppState};
pub use backend::{BackendKind, Backends};
pub use config::{ModelPaths, ServiceConfig};
pub use error::{ApiError, ConfigError};

/// Binds `config.host:config.port` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let backends = Backends::load(&config.models, config.similarity_floor);
    let addr = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config, backends)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
