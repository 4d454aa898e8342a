//! Vision-language client contracts and the builders that turn a scene bundle
//! into a language-enhanced map.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::SceneBundle;
use crate::extract::{extract_objects, ExtractConfig};
use crate::geometry::{
    bbox_iou, compute_crop_bbox, k_closest_lidar_points, locate_object, project_to_camera, CameraModel,
    CorrespondenceConfig, GeometryError, ObjectCrop,
};
use crate::map::{
    BevSource, CaptionFailure, CropDescriptions, LanguageEnhancedMap, MapObject, ObjectId, Provenance,
};
use crate::templates::{TemplateError, Templates};

pub const UNKNOWN_OBJECT: &str = "unknown object";
pub const MIN_MATCH_IOU: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaptionError {
    /// The backend could not be reached or answered with a transport failure.
    #[error("transport error: {0}")]
    Transport(String),
    /// The backend answered but declined to describe the region.
    #[error("model refused: {0}")]
    Refused(String),
    #[error("image error: {0}")]
    Image(String),
}

impl CaptionError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, CaptionError::Transport(_))
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("bundle has no ground-truth objects")]
    MissingGroundTruth,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Config(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Object,
    Background,
}

/// Part of one camera image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRegion {
    pub camera_name: String,
    /// Image file relative to the bundle directory, when known.
    pub image_path: Option<String>,
    pub bbox_px: [f64; 4],
    pub image_size: (u32, u32),
}

impl ImageRegion {
    pub fn full_image(cam: &CameraModel, image_path: Option<String>) -> Self {
        Self {
            camera_name: cam.name.clone(),
            image_path,
            bbox_px: [0.0, 0.0, cam.image_w as f64, cam.image_h as f64],
            image_size: (cam.image_w, cam.image_h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionerConfig {
    pub endpoint: String,
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_temperature() -> f64 {
    0.7
}

fn default_timeout() -> f64 {
    60.0
}

/// Large vision-language model that describes an image region.
pub trait CaptionerClient: Send + Sync {
    fn name(&self) -> &str;
    fn describe(&self, region: &ImageRegion, prompt: &str, kind: PromptKind) -> Result<String, CaptionError>;
}

/// Dense captioner used for ground-truth maps.
pub trait DenseCaptioner: Send + Sync {
    fn caption(&self, region: &ImageRegion) -> Result<String, CaptionError>;
}

/// Text recognizer used for ground-truth maps; empty text means none found.
pub trait OcrClient: Send + Sync {
    fn recognize(&self, region: &ImageRegion) -> Result<String, CaptionError>;
}

pub struct GroundTruthAnnotators {
    pub name: String,
    pub dense_captioner: Box<dyn DenseCaptioner>,
    pub ocr: Box<dyn OcrClient>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Attempts after the first one.
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            base_backoff: Duration::ZERO,
        }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut f: impl FnMut() -> Result<T, CaptionError>) -> Result<T, CaptionError> {
        let mut attempt = 0;
        loop {
            match f() {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    let delay = self.base_backoff * 2u32.pow(attempt);
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub correspondence: CorrespondenceConfig,
    pub extract: ExtractConfig,
    pub retry: RetryPolicy,
    /// Objects captioned concurrently.
    pub parallelism: usize,
    pub templates: Templates,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            correspondence: CorrespondenceConfig::default(),
            extract: ExtractConfig::default(),
            retry: RetryPolicy::default(),
            parallelism: 1,
            templates: Templates::builtin(),
        }
    }
}

enum Outcome {
    Described(CropDescriptions),
    NotVisible,
    Failed(String),
}

fn crop_region(bundle: &SceneBundle, crop: &ObjectCrop) -> ImageRegion {
    let cam = bundle.camera(&crop.camera_name).expect("crop camera comes from the rig");
    ImageRegion {
        camera_name: crop.camera_name.clone(),
        image_path: bundle.image_paths.get(&crop.camera_name).cloned(),
        bbox_px: crop.bbox_px,
        image_size: (cam.image_w, cam.image_h),
    }
}

/// Runs `f` over `items` with at most `parallelism` workers, keeping order.
fn parallel_map<T: Sync, R: Send>(items: &[T], parallelism: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = parallelism.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

fn finish_map(
    bundle: &SceneBundle,
    captioner_name: &str,
    bev_source: BevSource,
    mut objects: Vec<MapObject>,
    outcomes: Vec<Outcome>,
) -> LanguageEnhancedMap {
    let mut provenance = Provenance::new(captioner_name, bev_source);
    for (obj, outcome) in objects.iter_mut().zip(outcomes) {
        match outcome {
            Outcome::Described(d) => obj.crop_descriptions = d,
            Outcome::NotVisible => {
                obj.crop_descriptions = CropDescriptions::default();
                provenance.not_visible.push(obj.object_id);
            }
            Outcome::Failed(error) => {
                obj.crop_descriptions = CropDescriptions::default();
                provenance.caption_failures.push(CaptionFailure {
                    object_id: obj.object_id,
                    error,
                });
            }
        }
    }
    LanguageEnhancedMap::new(bundle.scene_token.clone(), bundle.grid.meta, provenance, objects)
}

fn check_inputs(bundle: &SceneBundle, opts: &BuildOptions) -> Result<(), BuildError> {
    bundle.grid.meta.validate().map_err(|e| BuildError::InvalidScene(e.to_string()))?;
    opts.correspondence.validate()?;
    Ok(())
}

/// Extracts objects from the bundle's grid and describes each one with the
/// captioner. Objects no camera sees keep their geometry with empty text;
/// captioner failures are recorded per object and never abort the map.
pub fn build_language_map(
    bundle: &SceneBundle,
    captioner: &dyn CaptionerClient,
    opts: &BuildOptions,
) -> Result<LanguageEnhancedMap, BuildError> {
    check_inputs(bundle, opts)?;
    let object_prompt = opts.templates.get("object_description")?;
    let background_prompt = opts.templates.get("background_description")?;
    let objects = extract_objects(&bundle.grid, &opts.extract);
    let outcomes = parallel_map(&objects, opts.parallelism, |obj| {
        let crop = match locate_object(
            obj.object_id,
            obj.position,
            &bundle.lidar_points,
            &bundle.cameras,
            &opts.correspondence,
        ) {
            Ok(c) => c,
            Err(_) => return Outcome::NotVisible,
        };
        let region = crop_region(bundle, &crop);
        let described = opts
            .retry
            .run(|| captioner.describe(&region, object_prompt, PromptKind::Object))
            .and_then(|fg| {
                opts.retry
                    .run(|| captioner.describe(&region, background_prompt, PromptKind::Background))
                    .map(|bg| (fg, bg))
            });
        match described {
            Ok((foreground_text, background_text)) => Outcome::Described(CropDescriptions {
                foreground_text,
                background_text,
                source_camera: Some(crop.camera_name),
                bbox_px: Some(crop.bbox_px),
                ..Default::default()
            }),
            Err(e) => Outcome::Failed(e.to_string()),
        }
    });
    Ok(finish_map(bundle, captioner.name(), bundle.bev_source, objects, outcomes))
}

/// Builds the reference map from ground-truth geometry using a dense
/// captioner and OCR. Foreground text is `caption | OCR: text` when OCR finds
/// text; background text is the caption of the whole camera image.
pub fn build_gt_map(
    bundle: &SceneBundle,
    annotators: &GroundTruthAnnotators,
    opts: &BuildOptions,
) -> Result<LanguageEnhancedMap, BuildError> {
    check_inputs(bundle, opts)?;
    let gt = bundle.gt_objects.as_ref().ok_or(BuildError::MissingGroundTruth)?;
    let objects: Vec<MapObject> = gt.clone();
    let outcomes = parallel_map(&objects, opts.parallelism, |obj| {
        let crop = match locate_object(
            obj.object_id,
            obj.position,
            &bundle.lidar_points,
            &bundle.cameras,
            &opts.correspondence,
        ) {
            Ok(c) => c,
            Err(_) => return Outcome::NotVisible,
        };
        let region = crop_region(bundle, &crop);
        let cam = bundle.camera(&crop.camera_name).expect("rig camera");
        let full = ImageRegion::full_image(cam, region.image_path.clone());
        let result = (|| {
            let caption = opts.retry.run(|| annotators.dense_captioner.caption(&region))?;
            let ocr = opts.retry.run(|| annotators.ocr.recognize(&region))?;
            let background = opts.retry.run(|| annotators.dense_captioner.caption(&full))?;
            Ok::<_, CaptionError>((caption, ocr, background))
        })();
        match result {
            Ok((caption, ocr, background_text)) => {
                let ocr = ocr.trim().to_string();
                let foreground_text = if ocr.is_empty() {
                    caption
                } else {
                    format!("{caption} | OCR: {ocr}")
                };
                Outcome::Described(CropDescriptions {
                    foreground_text,
                    background_text,
                    ocr_text: (!ocr.is_empty()).then_some(ocr),
                    source_camera: Some(crop.camera_name),
                    bbox_px: Some(crop.bbox_px),
                    extra: obj.crop_descriptions.extra.clone(),
                })
            }
            Err(e) => Outcome::Failed(e.to_string()),
        }
    });
    Ok(finish_map(bundle, &annotators.name, BevSource::GroundTruth, objects, outcomes))
}

/// Reference crop of one ground-truth object in one camera.
#[derive(Debug, Clone)]
struct ReferenceCrop {
    camera_name: String,
    bbox_px: [f64; 4],
    object: usize,
}

/// Lookup from image regions to the scripted ground truth of a bundle.
#[derive(Debug, Clone)]
pub struct SceneScript {
    objects: Vec<MapObject>,
    crops: Vec<ReferenceCrop>,
    background: String,
}

impl SceneScript {
    /// Projects every ground-truth object into every camera that sees it.
    pub fn from_bundle(bundle: &SceneBundle, cfg: &CorrespondenceConfig) -> Self {
        let objects = bundle.gt_objects.clone().unwrap_or_default();
        let mut crops = Vec::new();
        if !bundle.lidar_points.is_empty() {
            for (i, obj) in objects.iter().enumerate() {
                let Ok(points) = k_closest_lidar_points(&bundle.lidar_points, obj.position, cfg.k) else {
                    continue;
                };
                for cam in &bundle.cameras {
                    let px: Vec<(f64, f64)> = project_to_camera(&points, cam)
                        .into_iter()
                        .filter(|p| cam.in_image(p.u, p.v))
                        .map(|p| (p.u, p.v))
                        .collect();
                    if let Ok(bbox_px) = compute_crop_bbox(&px, cfg.bbox_pad_frac, (cam.image_w, cam.image_h)) {
                        crops.push(ReferenceCrop {
                            camera_name: cam.name.clone(),
                            bbox_px,
                            object: i,
                        });
                    }
                }
            }
        }
        let background = objects
            .iter()
            .map(|o| o.crop_descriptions.background_text.clone())
            .find(|t| !t.is_empty())
            .unwrap_or_else(|| "an empty road".to_string());
        Self {
            objects,
            crops,
            background,
        }
    }

    /// Ground-truth object whose reference crop best overlaps the region.
    pub fn match_region(&self, region: &ImageRegion) -> Option<&MapObject> {
        let mut best: Option<(f64, usize)> = None;
        for c in self.crops.iter().filter(|c| c.camera_name == region.camera_name) {
            let iou = bbox_iou(&c.bbox_px, &region.bbox_px);
            if iou >= MIN_MATCH_IOU && best.is_none_or(|(b, _)| iou > b) {
                best = Some((iou, c.object));
            }
        }
        best.map(|(_, i)| &self.objects[i])
    }

    pub fn reference_bbox(&self, id: ObjectId, camera: &str) -> Option<[f64; 4]> {
        self.crops
            .iter()
            .find(|c| c.camera_name == camera && self.objects[c.object].object_id == id)
            .map(|c| c.bbox_px)
    }

    pub fn background(&self) -> &str {
        &self.background
    }
}

/// Deterministic captioner that answers with the scripted description of the
/// best-matching ground-truth object.
#[derive(Debug, Clone)]
pub struct MockCaptioner {
    script: SceneScript,
}

impl MockCaptioner {
    pub fn new(script: SceneScript) -> Self {
        Self { script }
    }

    pub fn from_bundle(bundle: &SceneBundle, cfg: &CorrespondenceConfig) -> Self {
        Self::new(SceneScript::from_bundle(bundle, cfg))
    }
}

impl CaptionerClient for MockCaptioner {
    fn name(&self) -> &str {
        "mock-lvlm"
    }

    fn describe(&self, region: &ImageRegion, _prompt: &str, kind: PromptKind) -> Result<String, CaptionError> {
        Ok(match kind {
            PromptKind::Background => self.script.background().to_string(),
            PromptKind::Object => self
                .script
                .match_region(region)
                .map(|o| o.crop_descriptions.foreground_text.clone())
                .unwrap_or_else(|| UNKNOWN_OBJECT.to_string()),
        })
    }
}

/// Dense-captioner double: object regions get the scripted object text, other
/// regions get the scene background.
#[derive(Debug, Clone)]
pub struct MockDenseCaptioner {
    script: SceneScript,
}

impl DenseCaptioner for MockDenseCaptioner {
    fn caption(&self, region: &ImageRegion) -> Result<String, CaptionError> {
        Ok(match self.script.match_region(region) {
            Some(o) => o.crop_descriptions.foreground_text.clone(),
            None => self.script.background().to_string(),
        })
    }
}

/// OCR double returning the scripted `ocr_text` of the matched object.
#[derive(Debug, Clone)]
pub struct MockOcr {
    script: SceneScript,
}

impl OcrClient for MockOcr {
    fn recognize(&self, region: &ImageRegion) -> Result<String, CaptionError> {
        Ok(self
            .script
            .match_region(region)
            .and_then(|o| o.crop_descriptions.ocr_text.clone())
            .unwrap_or_default())
    }
}

pub fn mock_annotators(bundle: &SceneBundle, cfg: &CorrespondenceConfig) -> GroundTruthAnnotators {
    let script = SceneScript::from_bundle(bundle, cfg);
    GroundTruthAnnotators {
        name: "mock-dense-captioner+ocr".into(),
        dense_captioner: Box::new(MockDenseCaptioner { script: script.clone() }),
        ocr: Box::new(MockOcr { script }),
    }
}
