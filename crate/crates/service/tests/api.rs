use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use talk2bev::bundle::save_bundle;
use talk2bev::map::LanguageEnhancedMap;
use talk2bev::orchestrator::{LlmClient, ScriptedLlm};
use talk2bev::synth::{generate_synthetic_scene, SynthParams};
use talk2bev::templates::Templates;
use talk2bev_service::api::{cors, router, AppState};
use talk2bev_service::engine::Engine;
use tempfile::TempDir;
use tower::ServiceExt;

struct Fixture {
    _dir: TempDir,
    app: axum::Router,
}

/// Two scenes with ground truth (seeds 3 and 8) and one without (seed 11).
fn fixture_with(llm: Box<dyn LlmClient>, origin: Option<&str>) -> Fixture {
    let dir = TempDir::new().unwrap();
    let engine = Engine::default();
    let mut scenes = Vec::new();
    for (seed, gt) in [(3u64, true), (8, true), (11, false)] {
        let mut bundle = generate_synthetic_scene(seed, &SynthParams { n_objects: 5, ..Default::default() }).unwrap();
        if !gt {
            bundle.gt_objects = None;
        }
        let path = dir.path().join(&bundle.scene_token);
        save_bundle(&bundle, &path).unwrap();
        scenes.push(engine.load_scene(&path).unwrap());
    }
    let state = Arc::new(AppState::new(scenes, llm, Templates::builtin()));
    Fixture {
        _dir: dir,
        app: router(state, cors(origin).unwrap()),
    }
}

fn fixture() -> Fixture {
    fixture_with(Box::new(talk2bev::bench::mock_script()), None)
}

async fn send(app: &axum::Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, String) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, headers, String::from_utf8(bytes.to_vec()).unwrap())
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(uri: &str, body: &str) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn lists_scenes() {
    let f = fixture();
    let (status, _, body) = send(&f.app, get("/api/scenes")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["schema_version"], 1);
    let tokens: Vec<&str> = v["scenes"].as_array().unwrap().iter().map(|s| s["scene_token"].as_str().unwrap()).collect();
    assert_eq!(tokens, ["synth-000003", "synth-000008", "synth-000011"]);
    let gt: Vec<bool> = v["scenes"].as_array().unwrap().iter().map(|s| s["has_ground_truth"].as_bool().unwrap()).collect();
    assert_eq!(gt, [true, true, false]);
}

#[tokio::test]
async fn map_and_render_agree_with_ground_truth() {
    let f = fixture();
    let (status, headers, body) = send(&f.app, get("/api/scenes/synth-000003/map")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "application/json");
    let map = LanguageEnhancedMap::from_json(&body).unwrap();
    assert_eq!(map.scene_token, "synth-000003");
    assert_eq!(map.objects.len(), 5);

    let (status, _, body) = send(&f.app, get("/api/scenes/synth-000003/render")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    let objects = v["objects"].as_array().unwrap();
    assert_eq!(objects.len(), map.objects.len());
    for (r, o) in objects.iter().zip(&map.objects) {
        assert_eq!(r["object_id"], o.object_id);
        assert!(!r["polygons"].as_array().unwrap().is_empty());
    }
}

#[tokio::test]
async fn unknown_scene_is_404() {
    let f = fixture();
    for req in [
        get("/api/scenes/nope/map"),
        get("/api/scenes/nope/render"),
        post("/api/scenes/nope/chat", r#"{"message": "hi"}"#),
    ] {
        let (status, _, body) = send(&f.app, req).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        let v: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["error"]["code"], "unknown_scene");
    }
}

#[tokio::test]
async fn chat_references_the_object_asked_about() {
    let f = fixture();
    let (status, _, body) = send(&f.app, post("/api/scenes/synth-000003/chat", r#"{"message": "how far is object 1?"}"#)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["referenced_object_ids"], json!([1]));
    assert_eq!(v["structured_response"]["referenced_object_ids"], json!([1]));
    assert_eq!(v["tool_trace"][0]["output"]["type"], "distance");
    let id = v["conversation_id"].as_str().unwrap().to_string();

    // continuing the conversation keeps its id
    let body = json!({"conversation_id": id, "message": "how far is object 2?"}).to_string();
    let (status, _, text) = send(&f.app, post("/api/scenes/synth-000003/chat", &body)).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["conversation_id"], id.as_str());
    assert_eq!(v["referenced_object_ids"], json!([2]));
}

#[tokio::test]
async fn chat_input_errors() {
    let f = fixture();
    let uri = "/api/scenes/synth-000003/chat";

    let (status, _, body) = send(&f.app, post(uri, r#"{"message": 5}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["error"]["path"], "message");

    let (status, _, body) = send(&f.app, post(uri, r#"{"message": "hi", "extra": 1}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");

    let (status, _, _) = send(&f.app, post(uri, "not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _, body) = send(&f.app, post(uri, r#"{"message": "  "}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["error"]["path"], "message");

    let (status, _, body) = send(&f.app, post(uri, r#"{"schema_version": 9, "message": "hi"}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["error"]["path"], "schema_version");

    let (status, _, body) = send(&f.app, post(uri, r#"{"conversation_id": "conv-999999", "message": "hi"}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["error"]["code"], "unknown_conversation");
}

#[tokio::test]
async fn conversation_is_bound_to_its_scene() {
    let f = fixture();
    let (_, _, body) = send(&f.app, post("/api/scenes/synth-000003/chat", r#"{"message": "how far is object 1?"}"#)).await;
    let id = serde_json::from_str::<Value>(&body).unwrap()["conversation_id"].as_str().unwrap().to_string();
    let req = json!({"conversation_id": id, "message": "how far is object 1?"}).to_string();
    let (status, _, body) = send(&f.app, post("/api/scenes/synth-000008/chat", &req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["error"]["code"], "scene_mismatch");
}

#[tokio::test]
async fn backend_failure_is_502() {
    let f = fixture_with(Box::new(ScriptedLlm::new(Vec::new())), None);
    let (status, _, body) = send(&f.app, post("/api/scenes/synth-000003/chat", r#"{"message": "anything"}"#)).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY, "{body}");
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["error"]["code"], "llm");
}

#[tokio::test]
async fn cors_header_follows_configured_origin() {
    let f = fixture_with(Box::new(talk2bev::bench::mock_script()), Some("http://localhost:5173"));
    let req = Request::get("/api/scenes")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let (_, headers, _) = send(&f.app, req).await;
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");

    let f = fixture();
    let req = Request::get("/api/scenes").header(header::ORIGIN, "http://example.org").body(Body::empty()).unwrap();
    let (_, headers, _) = send(&f.app, req).await;
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
}

#[tokio::test]
async fn bench_run_scores_ground_truth_scenes() {
    let f = fixture();
    let (status, _, body) = send(&f.app, post("/api/bench/run", "{}")).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["counts"]["scenes"], 2);
    assert_eq!(v["jaccard_mean"], 1.0);
    assert_eq!(v["distance_error_mean"], 0.0);

    let (status, _, body) = send(&f.app, post("/api/bench/run", r#"{"scene_tokens": ["synth-000008"], "spatial_ops": false}"#)).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["counts"]["scenes"], 1);

    let (status, _, body) = send(&f.app, post("/api/bench/run", r#"{"scene_tokens": ["synth-000003", "synth-000011"]}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["error"]["path"], "scene_tokens[1]");

    let (status, _, _) = send(&f.app, post("/api/bench/run", r#"{"scene_tokens": ["nope"]}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _, body) = send(&f.app, post("/api/bench/run", r#"{"ablation": "yes"}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["error"]["path"], "ablation");
}
