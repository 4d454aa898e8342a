//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain values and returns a JSON string. Failures come
//! back as `{"error": "..."}` instead of exceptions, so the functions behave
//! the same natively and under wasm.

use serde_json::{json, Value};
use talk2bev::captioning::{build_language_map, BuildOptions, MockCaptioner};
use talk2bev::geometry::{locate_object, CorrespondenceConfig};
use talk2bev::map::LanguageEnhancedMap;
use talk2bev::orchestrator::{parse_call, run_call};
use talk2bev::render::render_payload;
use talk2bev::synth::{generate_synthetic_scene, SynthParams};
use wasm_bindgen::prelude::wasm_bindgen;

/// Upper bound on objects per demo scene.
pub const MAX_OBJECTS: u32 = 20;

fn error(message: impl std::fmt::Display) -> String {
    json!({ "error": message.to_string() }).to_string()
}

fn bundle(seed: u32, n_objects: u32) -> Result<talk2bev::bundle::SceneBundle, String> {
    if n_objects == 0 || n_objects > MAX_OBJECTS {
        return Err(format!("object count must be 1..={MAX_OBJECTS}, got {n_objects}"));
    }
    let params = SynthParams {
        n_objects: n_objects as usize,
        ..Default::default()
    };
    generate_synthetic_scene(seed as u64, &params).map_err(|e| e.to_string())
}

/// Synthesizes a scene and builds its map with the mock captioner.
/// Returns `{scene_token, map_json, render}`; `map_json` is the map file text
/// the other calls take.
#[wasm_bindgen]
pub fn synth_scene(seed: u32, n_objects: u32) -> String {
    let bundle = match bundle(seed, n_objects) {
        Ok(b) => b,
        Err(e) => return error(e),
    };
    let captioner = MockCaptioner::from_bundle(&bundle, &CorrespondenceConfig::default());
    // no threads in the browser
    let opts = BuildOptions {
        parallelism: 1,
        ..Default::default()
    };
    let map = match build_language_map(&bundle, &captioner, &opts) {
        Ok(m) => m,
        Err(e) => return error(e),
    };
    json!({
        "scene_token": map.scene_token,
        "map_json": map.to_json(),
        "render": render_payload(&map, Some(&bundle.grid)),
    })
    .to_string()
}

/// Evaluates one spatial call such as `k_closest(front_filter(objs), 2)`
/// against a map. Returns `{call, output}` with the normalized call text.
#[wasm_bindgen]
pub fn eval_query(map_json: &str, call: &str) -> String {
    let map = match LanguageEnhancedMap::from_json(map_json) {
        Ok(m) => m,
        Err(e) => return error(format!("bad map: {e}")),
    };
    let expr = match parse_call(call.trim()) {
        Ok(e) => e,
        Err(e) => return error(e),
    };
    let output = run_call(&expr, &map);
    json!({ "call": expr.to_string(), "output": output }).to_string()
}

/// Where object `object_id` of the scene `synth_scene(seed, n_objects)`
/// appears in the cameras: `{camera_name, image_size, bbox_px,
/// projected_points_px, caption}`.
#[wasm_bindgen]
pub fn project_object(seed: u32, n_objects: u32, object_id: u32) -> String {
    let bundle = match bundle(seed, n_objects) {
        Ok(b) => b,
        Err(e) => return error(e),
    };
    let Some(object) = bundle
        .gt_objects
        .as_deref()
        .unwrap_or_default()
        .iter()
        .find(|o| o.object_id == object_id)
    else {
        return error(format!("no object {object_id} in {}", bundle.scene_token));
    };
    let crop = match locate_object(
        object.object_id,
        (object.x(), object.y()),
        &bundle.lidar_points,
        &bundle.cameras,
        &CorrespondenceConfig::default(),
    ) {
        Ok(c) => c,
        Err(e) => return error(e),
    };
    let cam = bundle
        .cameras
        .iter()
        .find(|c| c.name == crop.camera_name)
        .expect("located camera is in the rig");
    let text = &object.crop_descriptions.foreground_text;
    let caption = if text.is_empty() { Value::Null } else { Value::String(text.clone()) };
    json!({
        "object_id": object.object_id,
        "camera_name": crop.camera_name,
        "image_size": [cam.image_w, cam.image_h],
        "bbox_px": crop.bbox_px,
        "projected_points_px": crop.projected_points_px,
        "caption": caption,
    })
    .to_string()
}
