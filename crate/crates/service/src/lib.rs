//! Read-only HTTP front end over an atomically swappable model snapshot.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use trialrec::inductive::{EstimationTrace, NewEntity, Recommendation, RecommendationQuery, TextIndexScope, WeightMode, DEFAULT_KNN_K};
use trialrec::kg::NodeType;
use trialrec::snapshot::{load_snapshot, Snapshot, SnapshotInfo, SnapshotPaths};
use trialrec::Error;

pub const DEFAULT_NEIGHBORS: usize = 10;

/// Holds the current snapshot. Readers clone the `Arc`, so a reload never
/// mixes two snapshots within one response.
#[derive(Default)]
pub struct AppState {
    current: RwLock<Option<Arc<Snapshot>>>,
}

impl AppState {
    pub fn new(snapshot: Snapshot) -> Self {
        AppState {
            current: RwLock::new(Some(Arc::new(snapshot))),
        }
    }

    pub fn current(&self) -> Option<Arc<Snapshot>> {
        self.current.read().expect("snapshot lock").clone()
    }

    /// Installs `snapshot`, returning the one it replaces.
    pub fn swap(&self, snapshot: Snapshot) -> Option<Arc<Snapshot>> {
        self.current.write().expect("snapshot lock").replace(Arc::new(snapshot))
    }

    /// Loads a snapshot off to the side, then swaps it in. Returns its id.
    pub fn reload(&self, paths: &SnapshotPaths, scope: TextIndexScope) -> trialrec::Result<String> {
        let snap = load_snapshot(paths, scope)?;
        let id = snap.snapshot_id.clone();
        self.swap(snap);
        Ok(id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn unavailable() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "no_snapshot", "no model snapshot is loaded")
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::EmptyQuery => Self::new(StatusCode::BAD_REQUEST, "empty_query", msg),
            Error::Untokenizable(_) => Self::new(StatusCode::BAD_REQUEST, "untokenizable_query", msg),
            Error::UnknownNode(_) => Self::new(StatusCode::NOT_FOUND, "unknown_node", msg),
            e if e.is_validation() => Self::bad_request(msg),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a ApiError,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorBody { error: &self })).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub title: String,
    pub element_type: String,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_mode: Option<String>,
}

impl RecommendRequest {
    pub fn to_query(&self) -> Result<RecommendationQuery, ApiError> {
        let element_type: NodeType = self.element_type.parse()?;
        let query = RecommendationQuery {
            knn_k: self.knn_k.unwrap_or(DEFAULT_KNN_K),
            weight_mode: parse_weight_mode(self.weight_mode.as_deref())?,
            ..RecommendationQuery::new(self.title.as_str(), element_type, self.k)
        };
        query.validate()?;
        Ok(query)
    }
}

fn parse_weight_mode(s: Option<&str>) -> Result<WeightMode, ApiError> {
    Ok(s.map(str::parse).transpose()?.unwrap_or_default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceNeighbor {
    pub node_id: String,
    pub title: String,
    pub similarity: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBody {
    pub k: usize,
    pub weight_mode: WeightMode,
    pub neighbors: Vec<TraceNeighbor>,
}

impl TraceBody {
    fn new(snap: &Snapshot, trace: &EstimationTrace) -> Self {
        TraceBody {
            k: trace.k,
            weight_mode: trace.weight_mode,
            neighbors: trace
                .neighbors
                .iter()
                .map(|n| TraceNeighbor {
                    node_id: n.node_id.to_string(),
                    title: snap.recommender.text_of(&n.node_id),
                    similarity: n.similarity,
                    weight: n.weight,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub snapshot_id: String,
    pub model: String,
    pub element_type: NodeType,
    pub recommendations: Vec<Recommendation>,
    pub trace: TraceBody,
}

/// What `POST /recommend` answers for `req` on `snap`.
pub fn recommend_response(snap: &Snapshot, req: &RecommendRequest) -> Result<RecommendResponse, ApiError> {
    let query = req.to_query()?;
    let set = snap.recommender.recommend(&query)?;
    Ok(RecommendResponse {
        snapshot_id: snap.snapshot_id.clone(),
        model: snap.recommender.model().kind().name().to_string(),
        element_type: query.element_type,
        recommendations: set.recommendations,
        trace: TraceBody::new(snap, &set.trace),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedRequest {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_mode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub snapshot_id: String,
    pub model: String,
    pub node_type: NodeType,
    pub vector: Vec<f64>,
    pub trace: TraceBody,
}

pub fn embed_response(snap: &Snapshot, req: &EmbedRequest) -> Result<EmbedResponse, ApiError> {
    let node_type: NodeType = req.node_type.as_deref().unwrap_or("NCT").parse()?;
    let k = req.knn_k.unwrap_or(DEFAULT_KNN_K);
    let mode = parse_weight_mode(req.weight_mode.as_deref())?;
    let trace = snap.recommender.estimate(&NewEntity::new(node_type, req.text.as_str()), k, mode)?;
    Ok(EmbedResponse {
        snapshot_id: snap.snapshot_id.clone(),
        model: snap.recommender.model().kind().name().to_string(),
        node_type,
        vector: trace.estimated_vector.clone(),
        trace: TraceBody::new(snap, &trace),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborsResponse {
    pub snapshot_id: String,
    pub model: String,
    pub node_id: String,
    pub neighbors: Vec<Recommendation>,
}

pub fn neighbors_response(snap: &Snapshot, node_id: &str, k: usize) -> Result<NeighborsResponse, ApiError> {
    if k == 0 {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    Ok(NeighborsResponse {
        snapshot_id: snap.snapshot_id.clone(),
        model: snap.recommender.model().kind().name().to_string(),
        node_id: node_id.to_string(),
        neighbors: snap.recommender.neighbors(node_id, k)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub snapshot_id: Option<String>,
}

type Shared = Arc<AppState>;

fn snapshot(state: &AppState) -> Result<Arc<Snapshot>, ApiError> {
    state.current().ok_or_else(ApiError::unavailable)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

/// Runs CPU-bound work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn health(State(state): State<Shared>) -> Response {
    match state.current() {
        Some(s) => Json(HealthResponse {
            status: "ok".into(),
            snapshot_id: Some(s.snapshot_id.clone()),
        })
        .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(HealthResponse {
                status: "unavailable".into(),
                snapshot_id: None,
            }),
        )
            .into_response(),
    }
}

async fn models(State(state): State<Shared>) -> Result<Json<SnapshotInfo>, ApiError> {
    Ok(Json(snapshot(&state)?.info()))
}

async fn recommend(State(state): State<Shared>, body: Bytes) -> Result<Json<RecommendResponse>, ApiError> {
    let snap = snapshot(&state)?;
    let req: RecommendRequest = parse_body(&body)?;
    blocking(move || recommend_response(&snap, &req)).await.map(Json)
}

async fn embed(State(state): State<Shared>, body: Bytes) -> Result<Json<EmbedResponse>, ApiError> {
    let snap = snapshot(&state)?;
    let req: EmbedRequest = parse_body(&body)?;
    blocking(move || embed_response(&snap, &req)).await.map(Json)
}

async fn neighbors(State(state): State<Shared>, Query(params): Query<HashMap<String, String>>) -> Result<Json<NeighborsResponse>, ApiError> {
    let snap = snapshot(&state)?;
    let node_id = params
        .get("node_id")
        .cloned()
        .ok_or_else(|| ApiError::bad_request("missing query parameter `node_id`"))?;
    let k = match params.get("k") {
        Some(k) => k.parse().map_err(|_| ApiError::bad_request(format!("invalid k {k:?}")))?,
        None => DEFAULT_NEIGHBORS,
    };
    blocking(move || neighbors_response(&snap, &node_id, k)).await.map(Json)
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/models", get(models))
        .route("/recommend", post(recommend))
        .route("/embed", post(embed))
        .route("/neighbors", get(neighbors))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
