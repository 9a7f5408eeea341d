use std::io::Write;
use std::sync::Arc;

use open_intake_core::notify::{Dispatcher, Notifier, RetryPolicy};
use open_intake_http::{router, AppState};

use crate::backend::{build_engine, delivery_adapter, open_store};
use crate::config::CliConfig;
use crate::error::{CliError, CliResult};

/// Queued notifications before request handlers start to wait.
const NOTIFY_QUEUE: usize = 1024;

pub(crate) fn serve(config: &CliConfig, out: &mut dyn Write) -> CliResult<()> {
    let store = open_store(config).map_err(|e| {
        if e.code == "store_locked" {
            CliError::new(e.code, format!("{}; is a server already running?", e.message))
        } else {
            e
        }
    })?;
    if config.client_salt.is_empty() {
        tracing::warn!("client_salt is empty; anonymous client hashes are easy to reverse");
    }
    if config.deterministic_seed.is_some() {
        tracing::warn!("deterministic mode: editor-link tokens are predictable");
    }
    let notifier = Arc::new(Notifier::new(delivery_adapter(config)?, RetryPolicy::default()));
    let dispatcher = Arc::new(Dispatcher::spawn(notifier, NOTIFY_QUEUE));
    let engine = Arc::new(build_engine(config, store, dispatcher.clone())?);
    let app = router(AppState::new(engine, config.api_config()));

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.bind)
            .await
            .map_err(|e| CliError::new("bind_failed", format!("{}: {e}", config.bind)))?;
        writeln!(out, "listening on {}", listener.local_addr()?)?;
        out.flush()?;
        let shutdown = async {
            tokio::select! {
                _ = interrupted() => {}
                _ = terminated() => {}
            }
        };
        open_intake_http::serve(listener, app, shutdown).await?;
        Ok::<_, CliError>(())
    })?;
    dispatcher.shutdown();
    writeln!(out, "stopped")?;
    Ok(())
}

async fn interrupted() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        tracing::error!(error = %e, "cannot wait for interrupt");
        std::future::pending::<()>().await;
    }
}

#[cfg(unix)]
async fn terminated() {
    use tokio::signal::unix::{signal, SignalKind};
    match signal(SignalKind::terminate()) {
        Ok(mut term) => {
            term.recv().await;
        }
        Err(e) => {
            tracing::error!(error = %e, "cannot wait for SIGTERM");
            std::future::pending::<()>().await;
        }
    }
}

#[cfg(not(unix))]
async fn terminated() {
    std::future::pending::<()>().await;
}
