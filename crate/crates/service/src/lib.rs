//! Read-only HTTP/JSON API over a trained model and its corpus.
//!
//! | route | |
//! |---|---|
//! | `GET /health` | `loading` or `ready` |
//! | `GET /meta` | model shape and class names |
//! | `GET /docs?offset&limit` | documents with predictions, ordered by id |
//! | `GET /docs/{id}/attribution?class&method` | word highlights plus column and filter scores |
//! | `GET /docs/{id}/diff?class_a&class_b&method` | column and filter score differences |
//! | `POST /docs/{id}/whatif` | probabilities before and after zeroing features |
//!
//! Every route except `/health` answers 503 until a [`Session`] is
//! installed into the [`AppState`].
//!
//! ```no_run
//! # async fn run(params: embedrel::textcnn::ModelParams, corpus: embedrel::corpus::Corpus) -> std::io::Result<()> {
//! use embedrel_service::{router, AppState, RouterOptions, ServiceSettings, Session};
//!
//! let state = AppState::ready(Session::new(params, corpus, ServiceSettings::default()));
//! let app = router(state, &RouterOptions::default());
//! let listener = tokio::net::TcpListener::bind("127.0.0.1:8080").await?;
//! axum::serve(listener, app).await
//! # }
//! ```

mod error;
pub mod handlers;
mod state;

use std::path::PathBuf;

use axum::http::HeaderValue;
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use state::{AppState, ServiceSettings, Session};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RouterOptions {
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
    /// Directory served for paths no API route matches.
    pub static_dir: Option<PathBuf>,
}

pub fn router(state: AppState, options: &RouterOptions) -> Router {
    let origin = match options
        .cors_origin
        .as_deref()
        .and_then(|o| HeaderValue::from_str(o).ok())
    {
        Some(value) => AllowOrigin::exact(value),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods(Any)
        .allow_headers(Any);

    let api = Router::new()
        .route("/health", get(handlers::health))
        .route("/meta", get(handlers::meta))
        .route("/docs", get(handlers::list_docs))
        .route("/docs/{id}/attribution", get(handlers::attribution))
        .route("/docs/{id}/diff", get(handlers::diff))
        .route("/docs/{id}/whatif", post(handlers::whatif))
        .with_state(state);
    let app = match &options.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors)
}
