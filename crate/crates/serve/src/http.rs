//! JSON API:
//!
//! * `GET /api/health` → `{status, model_version}`
//! * `POST /api/classify[?explain=1]`, multipart field `image` → [`Diagnosis`]
//!
//! Errors are `{error, message}` with status 413 (image over 10 MB), 422
//! (undecodable image), 400 (malformed request) or 503 (no model loaded).

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::artifact::{load_model, LoadedModel};
use crate::diagnose::{classify, MAX_IMAGE_BYTES};
use crate::ServeError;

/// Shared service state. The model is immutable; reloading swaps the `Arc`.
pub struct AppState {
    model: RwLock<Option<Arc<LoadedModel>>>,
    model_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(model: Option<LoadedModel>, model_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(AppState {
            model: RwLock::new(model.map(Arc::new)),
            model_dir,
        })
    }

    /// Loads the artifact directory; the service refuses to start on failure.
    pub fn from_dir(dir: PathBuf) -> Result<Arc<Self>, ServeError> {
        let model = load_model(&dir)?;
        Ok(Self::new(Some(model), Some(dir)))
    }

    pub fn current(&self) -> Option<Arc<LoadedModel>> {
        self.model.read().expect("model lock").clone()
    }

    pub fn replace(&self, model: Option<LoadedModel>) {
        *self.model.write().expect("model lock") = model.map(Arc::new);
    }

    /// Re-reads the model directory. On failure the previous model stays in service.
    pub fn reload(&self) -> Result<String, ServeError> {
        let dir = self
            .model_dir
            .as_ref()
            .ok_or_else(|| ServeError::Artifact("no model directory to reload from".into()))?;
        let m = load_model(dir)?;
        let v = m.meta.version.clone();
        self.replace(Some(m));
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ServeError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServeError::TooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            ServeError::Undecodable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServeError::NoModel => StatusCode::SERVICE_UNAVAILABLE,
            ServeError::BadRequest(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServeError::TooLarge { .. } => "too_large",
            ServeError::Undecodable(_) => "undecodable_image",
            ServeError::NoModel => "no_model",
            ServeError::BadRequest(_) => "bad_request",
            _ => "internal",
        }
    }
}

impl IntoResponse for ServeError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

async fn health(State(state): State<Arc<AppState>>) -> (StatusCode, Json<Health>) {
    match state.current() {
        Some(m) => (
            StatusCode::OK,
            Json(Health {
                status: "ok".into(),
                model_version: Some(m.meta.version.clone()),
            }),
        ),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(Health {
                status: "no_model".into(),
                model_version: None,
            }),
        ),
    }
}

#[derive(Debug, Default, Deserialize)]
struct ClassifyQuery {
    explain: Option<String>,
}

async fn classify_handler(
    State(state): State<Arc<AppState>>,
    Query(q): Query<ClassifyQuery>,
    mut multipart: Multipart,
) -> Result<Response, ServeError> {
    let model = state.current().ok_or(ServeError::NoModel)?;
    let explain = matches!(q.explain.as_deref(), Some("1" | "true" | "yes"));
    let mut image = None;
    loop {
        let field = multipart.next_field().await.map_err(multipart_error)?;
        let Some(field) = field else { break };
        if field.name() == Some("image") {
            let bytes = field.bytes().await.map_err(multipart_error)?;
            image = Some(bytes);
            break;
        }
    }
    let bytes = image.ok_or_else(|| ServeError::BadRequest("missing multipart field `image`".into()))?;
    if bytes.len() > MAX_IMAGE_BYTES {
        return Err(ServeError::TooLarge {
            size: bytes.len(),
            limit: MAX_IMAGE_BYTES,
        });
    }
    let d = tokio::task::spawn_blocking(move || classify(&model, &bytes, explain))
        .await
        .map_err(|e| ServeError::Artifact(format!("worker failed: {e}")))??;
    Ok(Json(d).into_response())
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ServeError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ServeError::TooLarge {
            size: MAX_IMAGE_BYTES + 1,
            limit: MAX_IMAGE_BYTES,
        }
    } else {
        ServeError::BadRequest(e.body_text())
    }
}

/// Routes with CORS for `origin`, or for any origin when `None`.
pub fn router(state: Arc<AppState>, origin: Option<&str>) -> Router {
    let allow = match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/classify", post(classify_handler))
        // room for the multipart envelope around a maximal image
        .layer(DefaultBodyLimit::max(MAX_IMAGE_BYTES + 64 * 1024))
        .layer(cors)
        .with_state(state)
}

/// Serves until ctrl-c. SIGHUP reloads the model directory.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>, origin: Option<String>) -> Result<(), ServeError> {
    #[cfg(unix)]
    {
        let st = state.clone();
        tokio::spawn(async move {
            use tokio::signal::unix::{signal, SignalKind};
            let Ok(mut hup) = signal(SignalKind::hangup()) else {
                log::warn!("cannot install SIGHUP handler; reload disabled");
                return;
            };
            while hup.recv().await.is_some() {
                let st = st.clone();
                match tokio::task::spawn_blocking(move || st.reload()).await {
                    Ok(Ok(v)) => log::info!("reloaded model {v}"),
                    Ok(Err(e)) => log::error!("reload failed, keeping the current model: {e}"),
                    Err(e) => log::error!("reload task failed: {e}"),
                }
            }
        });
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, origin.as_deref()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
