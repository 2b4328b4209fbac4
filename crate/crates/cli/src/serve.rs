use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use fiberscope_service::{provider_for, Service, ServiceConfig};

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Address to bind, e.g. `0.0.0.0:8080`.
    #[arg(long, conflicts_with = "port")]
    pub bind: Option<String>,
    /// Port on 127.0.0.1.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

impl ServeArgs {
    pub fn config(&self) -> Result<ServiceConfig> {
        let mut c = ServiceConfig::load(self.config.as_deref())?;
        if let Some(b) = &self.bind {
            c.bind = b.clone();
        }
        if let Some(p) = self.port {
            c.bind = format!("127.0.0.1:{p}");
        }
        if let Some(d) = &self.data_root {
            c.data_root = d.clone();
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if let Some(m) = &self.model {
            c.model = Some(m.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn run(args: &ServeArgs) -> Result<()> {
    let config = args.config()?;
    if config.model.is_none() {
        log::warn!("no model configured; using the model-free component detector");
    }
    let provider = provider_for(config.model.as_deref())?;
    let service = Arc::new(Service::start(config, provider).context("starting job service")?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(fiberscope_service::serve(service.clone()))?;
    service.shutdown();
    Ok(())
}
