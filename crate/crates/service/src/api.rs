//! REST endpoints.
//!
//! Every JSON body carries `schema_version`; the map document carries its own
//! `format_version`. Errors are `{schema_version, error: {code, message,
//! path?}}` with 404 for unknown scenes or conversations, 400 for bad
//! requests (with the JSON path of the offending field) and 502 when a
//! backend fails.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use talk2bev::bench::{run_bench, BenchOptions, BenchReport, BenchScene, SystemUnderTest};
use talk2bev::map::{BevSource, ObjectId};
use talk2bev::orchestrator::{answer_query, Conversation, LlmClient, OrchestratorError, StructuredResponse, ToolCall};
use talk2bev::render::render_payload;
use talk2bev::templates::Templates;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::engine::LoadedScene;

pub const API_SCHEMA_VERSION: u32 = 1;
pub const CONVERSATION_CAP: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub path: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
            path: None,
        }
    }

    fn bad_request(message: impl Into<String>, path: Option<String>) -> Self {
        Self {
            path,
            ..Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
        }
    }

    fn unknown_scene(token: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_scene", format!("no scene with token `{token}`"))
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let status = match e {
            OrchestratorError::SceneMismatch { .. } => StatusCode::BAD_REQUEST,
            OrchestratorError::Template(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_GATEWAY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(p) = self.path {
            error["path"] = json!(p);
        }
        (self.status, Json(json!({ "schema_version": API_SCHEMA_VERSION, "error": error }))).into_response()
    }
}

/// JSON body whose decoding errors name the offending field.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request(e.to_string(), None))?;
        let mut de = serde_json::Deserializer::from_slice(&bytes);
        let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            ApiError::bad_request(e.inner().to_string(), Some(path))
        })?;
        Ok(Body(value))
    }
}

fn check_version(v: Option<u32>) -> Result<(), ApiError> {
    match v {
        Some(v) if v != API_SCHEMA_VERSION => Err(ApiError::bad_request(
            format!("unsupported schema_version {v}"),
            Some("schema_version".into()),
        )),
        _ => Ok(()),
    }
}

/// In-memory conversations with least-recently-used eviction.
pub struct ConversationStore {
    cap: usize,
    tick: u64,
    next_id: u64,
    entries: HashMap<String, (u64, Arc<Mutex<Conversation>>)>,
}

impl ConversationStore {
    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            tick: 0,
            next_id: 1,
            entries: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&mut self, id: &str) -> Option<Arc<Mutex<Conversation>>> {
        self.tick += 1;
        let tick = self.tick;
        self.entries.get_mut(id).map(|(t, c)| {
            *t = tick;
            c.clone()
        })
    }

    pub fn create(&mut self, scene_token: &str) -> Arc<Mutex<Conversation>> {
        let id = format!("conv-{:06}", self.next_id);
        self.next_id += 1;
        if self.entries.len() >= self.cap {
            if let Some(oldest) = self.entries.iter().min_by_key(|(_, (t, _))| *t).map(|(k, _)| k.clone()) {
                self.entries.remove(&oldest);
            }
        }
        self.tick += 1;
        let conv = Arc::new(Mutex::new(Conversation::new(id.clone(), scene_token)));
        self.entries.insert(id, (self.tick, conv.clone()));
        conv
    }
}

pub struct AppState {
    pub scenes: BTreeMap<String, LoadedScene>,
    pub llm: Box<dyn LlmClient>,
    pub templates: Templates,
    pub conversations: Mutex<ConversationStore>,
    pub bench_parallelism: usize,
    pub seed: u64,
}

impl AppState {
    pub fn new(scenes: Vec<LoadedScene>, llm: Box<dyn LlmClient>, templates: Templates) -> Self {
        Self {
            scenes: scenes.into_iter().map(|s| (s.map.scene_token.clone(), s)).collect(),
            llm,
            templates,
            conversations: Mutex::new(ConversationStore::new(CONVERSATION_CAP)),
            bench_parallelism: 4,
            seed: 0,
        }
    }

    fn scene(&self, token: &str) -> Result<&LoadedScene, ApiError> {
        self.scenes.get(token).ok_or_else(|| ApiError::unknown_scene(token))
    }
}

type Shared = Arc<AppState>;

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene_token: String,
    pub object_count: usize,
    pub bev_source: BevSource,
    pub has_ground_truth: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneList {
    pub schema_version: u32,
    pub scenes: Vec<SceneSummary>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRequest {
    #[serde(default)]
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub conversation_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChatResponse {
    pub schema_version: u32,
    pub conversation_id: String,
    pub structured_response: StructuredResponse,
    pub referenced_object_ids: Vec<ObjectId>,
    pub tool_trace: Vec<ToolCall>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRequest {
    #[serde(default)]
    pub schema_version: Option<u32>,
    /// Scenes to score; every scene with ground truth when empty.
    #[serde(default)]
    pub scene_tokens: Vec<String>,
    #[serde(default)]
    pub ablation: bool,
    #[serde(default = "yes")]
    pub spatial_ops: bool,
}

fn yes() -> bool {
    true
}

async fn list_scenes(State(state): State<Shared>) -> Json<SceneList> {
    Json(SceneList {
        schema_version: API_SCHEMA_VERSION,
        scenes: state
            .scenes
            .values()
            .map(|s| SceneSummary {
                scene_token: s.map.scene_token.clone(),
                object_count: s.map.objects.len(),
                bev_source: s.map.provenance.bev_source,
                has_ground_truth: s.bench.is_some(),
            })
            .collect(),
    })
}

async fn scene_map(State(state): State<Shared>, Path(token): Path<String>) -> Result<Response, ApiError> {
    let scene = state.scene(&token)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], scene.map.to_json()).into_response())
}

async fn scene_render(State(state): State<Shared>, Path(token): Path<String>) -> Result<Response, ApiError> {
    let scene = state.scene(&token)?;
    Ok(Json(render_payload(&scene.map, Some(&scene.bundle.grid))).into_response())
}

async fn chat(
    State(state): State<Shared>,
    Path(token): Path<String>,
    Body(req): Body<ChatRequest>,
) -> Result<Json<ChatResponse>, ApiError> {
    check_version(req.schema_version)?;
    state.scene(&token)?;
    if req.message.trim().is_empty() {
        return Err(ApiError::bad_request("message is empty", Some("message".into())));
    }
    let conversation = {
        let mut store = state.conversations.lock().expect("store lock");
        match &req.conversation_id {
            Some(id) => store.get(id).ok_or_else(|| {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_conversation", format!("no conversation `{id}`"))
            })?,
            None => store.create(&token),
        }
    };
    let worker = state.clone();
    tokio::task::spawn_blocking(move || {
        let scene = worker.scene(&token)?;
        // one request at a time per conversation
        let mut conv = conversation.lock().expect("conversation lock");
        let outcome = answer_query(&scene.map, &mut conv, &req.message, worker.llm.as_ref(), &worker.templates)?;
        Ok(Json(ChatResponse {
            schema_version: API_SCHEMA_VERSION,
            conversation_id: conv.conversation_id.clone(),
            referenced_object_ids: outcome.response.referenced_object_ids.clone(),
            structured_response: outcome.response,
            tool_trace: outcome.trace,
        }))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn bench_run(State(state): State<Shared>, Body(req): Body<BenchRequest>) -> Result<Json<BenchReport>, ApiError> {
    check_version(req.schema_version)?;
    let tokens: Vec<String> = if req.scene_tokens.is_empty() {
        state
            .scenes
            .values()
            .filter(|s| s.bench.is_some())
            .map(|s| s.map.scene_token.clone())
            .collect()
    } else {
        req.scene_tokens.clone()
    };
    for (i, t) in tokens.iter().enumerate() {
        if state.scene(t)?.bench.is_none() {
            return Err(ApiError::bad_request(
                format!("scene `{t}` has no ground truth to score against"),
                Some(format!("scene_tokens[{i}]")),
            ));
        }
    }
    if tokens.is_empty() {
        return Err(ApiError::bad_request("no scene has ground truth", Some("scene_tokens".into())));
    }
    let worker = state.clone();
    let report = tokio::task::spawn_blocking(move || {
        let scenes: Vec<BenchScene> = tokens
            .iter()
            .filter_map(|t| worker.scenes.get(t).and_then(|s| s.bench.clone()))
            .collect();
        let sut = SystemUnderTest {
            llm: worker.llm.as_ref(),
            templates: &worker.templates,
        };
        let opts = BenchOptions {
            spatial_ops: req.spatial_ops,
            ablation: req.ablation,
            seed: worker.seed,
            parallelism: worker.bench_parallelism,
        };
        run_bench(&scenes, &sut, &opts)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(Json(report))
}

/// CORS for `origin`, or for any origin when it is `None`.
pub fn cors(origin: Option<&str>) -> Result<CorsLayer, String> {
    let allow = match origin {
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).map_err(|e| format!("bad CORS origin `{o}`: {e}"))?),
        None => AllowOrigin::any(),
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]))
}

pub fn router(state: Shared, cors: CorsLayer) -> Router {
    Router::new()
        .route("/api/scenes", get(list_scenes))
        .route("/api/scenes/{token}/map", get(scene_map))
        .route("/api/scenes/{token}/render", get(scene_render))
        .route("/api/scenes/{token}/chat", post(chat))
        .route("/api/bench/run", post(bench_run))
        .layer(cors)
        .with_state(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_evicts_least_recently_used() {
        let mut store = ConversationStore::new(3);
        let ids: Vec<String> = (0..3)
            .map(|_| store.create("s").lock().unwrap().conversation_id.clone())
            .collect();
        assert!(store.get(&ids[0]).is_some());
        store.create("s");
        assert_eq!(store.len(), 3);
        assert!(store.get(&ids[1]).is_none());
        assert!(store.get(&ids[0]).is_some());
        assert!(store.get(&ids[2]).is_some());
    }
}
