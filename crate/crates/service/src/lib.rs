//! Job-oriented front end for fiberscope: a persistent job queue, result
//! exports (CSV, mask archive, overlay) and the HTTP API served to the web
//! client.

pub mod analysis;
pub mod api;
pub mod config;
pub mod detector;
pub mod export;
pub mod job;
pub mod service;
pub mod store;

pub use analysis::{analyze, AnalysisOutput};
pub use api::router;
pub use config::ServiceConfig;
pub use detector::{provider_for, ComponentProvider, DetectorProvider, ModelProvider};
pub use job::{JobParams, JobRecord, JobState};
pub use service::{Service, ServiceError};

use std::sync::Arc;

/// Binds `config.bind` and serves until ctrl-c.
pub async fn serve(service: Arc<Service>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&service.config().bind).await?;
    log::info!(
        "listening on http://{} ({}), data root {}",
        listener.local_addr()?,
        service.provider().describe(),
        service.config().data_root.display()
    );
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
