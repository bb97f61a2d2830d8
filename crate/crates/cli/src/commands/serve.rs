use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Args;
use semspace_service::{serve, AppState, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::settings::required;
use crate::Status;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeArgs {
    /// Service TOML naming the catalog, centroids and per-view artifacts.
    #[arg(long)]
    pub service: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long)]
    pub listen: Option<SocketAddr>,
}

async fn shutdown_signal() {
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
    eprintln!("shutting down");
}

pub fn run(args: ServeArgs) -> anyhow::Result<Status> {
    let path = required(args.service, "service")?;
    let mut config = ServiceConfig::load(&path)?;
    if let Some(addr) = args.listen {
        config.listen = addr;
    }
    let listen = config.listen;
    let state = AppState::load(config).context("loading service artifacts")?;
    eprintln!(
        "loaded {} items, views: {}",
        state.catalog.len(),
        state.views.keys().map(|v| v.as_str()).collect::<Vec<_>>().join(", ")
    );
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .with_context(|| format!("binding {listen}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        serve(Arc::new(state), listener, shutdown_signal()).await?;
        anyhow::Ok(())
    })?;
    Ok(Status::Success)
}
