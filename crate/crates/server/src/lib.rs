//! HTTP API over the NL-to-SPARQL pipeline.

mod api;
pub mod config;

use std::net::SocketAddr;

pub use api::{answer, router, ApiError, AppState, AskRequest, AskResponse, EtlRequest, EtlResponse, Health, TemplateListing};
pub use config::{ConfigError, Settings};

/// Wires every component described by `settings` into an [`AppState`].
pub async fn state_from_settings(settings: &Settings) -> Result<AppState, ConfigError> {
    let embedder = settings.embedder()?;
    let index = settings.template_index(embedder.as_ref()).await?;
    Ok(AppState::new(
        index,
        embedder,
        settings.llm()?,
        settings.sparql_client()?,
        settings.ontology_text()?,
        settings.generation(),
        settings.index_params(),
    ))
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "api listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
