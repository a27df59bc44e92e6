use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use sevscale_service::http::{router, ApiState};
use sevscale_service::{Service, ServiceConfig, SystemClock};

#[derive(Args)]
pub struct ServeArgs {
    /// Service config, TOML.
    #[arg(long, env = "SEVSCALE_CONFIG")]
    config: Option<PathBuf>,
    /// Port to listen on; keeps the configured host.
    #[arg(long, env = "SEVSCALE_PORT")]
    port: Option<u16>,
    /// Full listen address; takes precedence over `--port`.
    #[arg(long, env = "SEVSCALE_BIND")]
    bind: Option<SocketAddr>,
    /// Directory holding one event log per campaign.
    #[arg(long, env = "SEVSCALE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Admin bearer token.
    #[arg(long, env = "SEVSCALE_ADMIN_TOKEN", hide_env_values = true)]
    admin_token: Option<String>,
}

pub fn resolve(args: &ServeArgs) -> Result<ServiceConfig> {
    let mut config = match &args.config {
        Some(path) => ServiceConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ServiceConfig::default(),
    };
    if let Some(port) = args.port {
        config.bind.set_port(port);
    }
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    if let Some(dir) = &args.data_dir {
        config.data_dir = dir.clone();
    }
    if let Some(token) = &args.admin_token {
        config.admin_token = Some(token.clone());
    }
    Ok(config)
}

pub fn run(args: ServeArgs) -> Result<()> {
    let config = resolve(&args)?;
    let service = Service::open(&config.data_dir, Arc::new(SystemClock))
        .with_context(|| format!("opening data directory {}", config.data_dir.display()))?;
    if config.admin_token.is_none() {
        tracing::warn!("no admin token configured; management endpoints are open");
    }
    let app = router(ApiState {
        service: Arc::new(service),
        admin_token: config.admin_token.clone(),
        default_policy: config.default_policy.clone(),
        datasheet: config.datasheet.clone(),
    });
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.bind)
            .await
            .with_context(|| format!("binding {}", config.bind))?;
        tracing::info!(addr = %listener.local_addr()?, data_dir = %config.data_dir.display(), "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await?;
        Ok(())
    })
}
