//! JSON HTTP API.
//!
//! Public routes take submissions, list accepted content and serve editor
//! links. Routes under `/admin` require the site's owner key in the
//! `X-Owner-Key` header. Errors are `{code, message, fields?}` bodies.

mod admin;
mod auth;
mod error;
mod public;
mod rate_limit;
pub mod views;

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{ConnectInfo, FromRequestParts};
use axum::http::request::Parts;
use axum::http::{header, HeaderName, Method};
use axum::Router;
use open_intake_core::Engine;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use auth::OWNER_KEY_HEADER;
pub use error::{status_for, ApiError, ErrorBody};
pub use rate_limit::{RateLimitConfig, RateLimiter};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ApiConfig {
    /// Owner key per site id.
    pub owner_keys: BTreeMap<String, String>,
    /// Key for cross-site operator routes such as global statistics.
    #[serde(default)]
    pub operator_key: Option<String>,
    pub rate_limit: RateLimitConfig,
    /// Origins allowed to call `/admin` routes from a browser.
    pub admin_origins: Vec<String>,
    /// Salt for hashing client addresses into anonymous subjects.
    pub client_salt: String,
    /// Take the client address from `X-Forwarded-For` (behind a proxy).
    pub trust_forwarded_for: bool,
}

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub config: Arc<ApiConfig>,
    pub limiter: Arc<RateLimiter>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, config: ApiConfig) -> Self {
        let limiter = Arc::new(RateLimiter::new(config.rate_limit));
        AppState { engine, config: Arc::new(config), limiter }
    }

    /// Runs an engine call off the async workers; commits may fsync.
    async fn run<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Engine) -> open_intake_core::Result<T> + Send + 'static,
    {
        let engine = self.engine.clone();
        match tokio::task::spawn_blocking(move || f(&engine)).await {
            Ok(result) => result.map_err(ApiError::from),
            Err(e) => {
                tracing::error!(error = %e, "engine task failed");
                Err(ApiError::new(axum::http::StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error"))
            }
        }
    }
}

/// Socket address of the peer, when the server was started with connect info.
pub(crate) struct PeerAddr(pub Option<SocketAddr>);

impl<S: Send + Sync> FromRequestParts<S> for PeerAddr {
    type Rejection = std::convert::Infallible;

    async fn from_request_parts(parts: &mut Parts, _state: &S) -> Result<Self, Self::Rejection> {
        Ok(PeerAddr(parts.extensions.get::<ConnectInfo<SocketAddr>>().map(|c| c.0)))
    }
}

pub fn router(state: AppState) -> Router {
    let public_cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST, Method::PUT, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE]);
    let origins: Vec<_> = state.config.admin_origins.iter().filter_map(|o| o.parse().ok()).collect();
    let admin_cors = CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods([Method::GET, Method::POST, Method::PUT, Method::PATCH, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE, HeaderName::from_static(OWNER_KEY_HEADER)]);

    Router::new()
        .merge(public::routes().layer(public_cors))
        .merge(admin::routes().layer(admin_cors))
        .fallback(|| async { ApiError::not_found("route") })
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(shutdown)
        .await
}
