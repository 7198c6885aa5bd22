//! Read-only JSON API over a findings store.
//!
//! | route                              | body                                          |
//! |------------------------------------|-----------------------------------------------|
//! | `GET /api/summary`                 | severity counts, overall and per collection   |
//! | `GET /api/vulnerabilities/{sev}`   | findings of one severity + `collection_name`  |
//! | `GET /api/collections/{name}`      | one collection, CRITICAL first                |
//! | `GET /healthz`                     | `{"status":"ok"}`                             |

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use crate::model::{Finding, Severity};
use crate::store::{CollectionName, FindingsStore, StoreError, SummaryCounts};

pub const DEFAULT_PORT: u16 = 5002;

type SharedStore = Arc<dyn FindingsStore>;

/// A finding as returned by the severity route.
#[derive(Debug, Serialize)]
pub struct TaggedFinding {
    #[serde(flatten)]
    pub finding: Finding,
    pub collection_name: CollectionName,
}

struct ApiError(StoreError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        tracing::error!(error = %self.0, "store failure");
        (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

async fn with_store<T, F>(store: SharedStore, f: F) -> Result<Json<T>, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&dyn FindingsStore) -> Result<T, StoreError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(store.as_ref()))
        .await
        .map_err(|e| ApiError(StoreError::Backend(e.to_string())))?
        .map(Json)
        .map_err(ApiError)
}

async fn summary(State(store): State<SharedStore>) -> Result<Json<SummaryCounts>, ApiError> {
    with_store(store, |s| s.summary()).await
}

async fn vulnerabilities(
    State(store): State<SharedStore>,
    Path(severity): Path<String>,
) -> Result<Json<Vec<TaggedFinding>>, ApiError> {
    let severity = Severity::parse(&severity);
    with_store(store, move |s| {
        Ok(s.find_by_severity(severity)?
            .into_iter()
            .map(|(collection_name, finding)| TaggedFinding {
                finding,
                collection_name,
            })
            .collect())
    })
    .await
}

async fn collection(State(store): State<SharedStore>, Path(name): Path<String>) -> Result<Json<Vec<Finding>>, ApiError> {
    let Ok(name) = CollectionName::new(name) else {
        return Ok(Json(Vec::new()));
    };
    with_store(store, move |s| s.get_collection(&name)).await
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// Build the API router. When `static_dir` is set, files under it are served
/// for every path the API does not claim (the dashboard bundle).
pub fn router(store: SharedStore, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/summary", get(summary))
        .route("/api/vulnerabilities/{severity}", get(vulnerabilities))
        .route("/api/collections/{name}", get(collection))
        .route("/healthz", get(healthz))
        .with_state(store);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(CorsLayer::permissive())
}

/// Serve `router` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    router: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await
}
