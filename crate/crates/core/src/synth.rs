//! Seeded synthetic scenes: rectangular vehicle blobs on a road cross, a
//! six-camera rig, LiDAR returns on blob outlines and scripted ground truth.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map};
use thiserror::Error;

use crate::bundle::SceneBundle;
use crate::geometry::{CameraModel, Point3};
use crate::grid::{BevGrid, GridError, GridMeta};
use crate::map::{BevSource, Category, CropDescriptions, MapObject, ObjectId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("could only place {placed} of {requested} objects without overlap")]
    Capacity { placed: usize, requested: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RigSpec {
    /// Six 60° cameras covering the full circle, front camera first.
    #[default]
    Surround,
    /// Only the front camera.
    FrontOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_objects: usize,
    pub grid_meta: GridMeta,
    pub rig: RigSpec,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_objects: 5,
            grid_meta: GridMeta::default(),
            rig: RigSpec::Surround,
        }
    }
}

pub const CAMERA_HEIGHT_M: f64 = 1.5;
pub const IMAGE_W: u32 = 800;
pub const IMAGE_H: u32 = 600;
pub const LIDAR_HEIGHTS_M: [f64; 3] = [0.5, 1.0, 1.5];
/// Spacing of LiDAR returns along blob outlines.
pub const LIDAR_STEP_M: f64 = 0.25;
/// Objects stay within this many meters of the ego along each axis.
pub const PLACEMENT_RADIUS_M: f64 = 40.0;
/// Ego keep-out half extents (x, y) in meters.
pub const EGO_CLEARANCE_M: (f64, f64) = (5.0, 4.0);
/// Minimum empty cells between two blobs.
pub const BLOB_GAP_CELLS: usize = 2;
const MAX_ATTEMPTS_PER_OBJECT: usize = 400;

/// Camera names and headings in rig order.
pub const SURROUND_CAMERAS: [(&str, f64); 6] = [
    ("CAM_FRONT", 0.0),
    ("CAM_FRONT_LEFT", PI / 3.0),
    ("CAM_FRONT_RIGHT", -PI / 3.0),
    ("CAM_BACK", PI),
    ("CAM_BACK_LEFT", 2.0 * PI / 3.0),
    ("CAM_BACK_RIGHT", -2.0 * PI / 3.0),
];

pub fn canonical_rig(spec: RigSpec) -> Vec<CameraModel> {
    let n = match spec {
        RigSpec::Surround => SURROUND_CAMERAS.len(),
        RigSpec::FrontOnly => 1,
    };
    SURROUND_CAMERAS[..n]
        .iter()
        .map(|&(name, yaw)| {
            CameraModel::looking_at_yaw(name, yaw, [0.0, 0.0, CAMERA_HEIGHT_M], PI / 3.0, IMAGE_W, IMAGE_H)
        })
        .collect()
}

pub const COLORS: [&str; 8] = ["white", "black", "silver", "red", "blue", "grey", "yellow", "green"];
pub const STATUSES: [&str; 5] = [
    "parked by the curb",
    "moving forward",
    "waiting with brake lights on",
    "reversing with its parking lights on",
    "turning with its indicator blinking",
];
pub const BACKGROUNDS: [&str; 6] = [
    "a busy city intersection on a sunny afternoon",
    "a wet street at night lit by street lamps",
    "a quiet suburban road lined with trees",
    "a construction zone with orange barriers and cones",
    "a parking lot next to an office building",
    "a highway on-ramp under an overcast sky",
];

struct Archetype {
    category: Category,
    /// (length along x, width along y) in cells.
    size_cells: (usize, usize),
    labels: &'static [&'static str],
    texts: &'static [&'static str],
}

const ARCHETYPES: [Archetype; 5] = [
    Archetype {
        category: Category::Car,
        size_cells: (9, 4),
        labels: &["sedan", "hatchback", "SUV", "taxi"],
        texts: &["TAXI", "UBER"],
    },
    Archetype {
        category: Category::Truck,
        size_cells: (16, 5),
        labels: &["box truck", "delivery truck", "pickup truck"],
        texts: &["ACME LOGISTICS", "FRESH FOODS"],
    },
    Archetype {
        category: Category::TwoWheeler,
        size_cells: (4, 2),
        labels: &["motorcycle", "bicycle", "scooter"],
        texts: &[],
    },
    Archetype {
        category: Category::Construction,
        size_cells: (12, 6),
        labels: &["bulldozer", "excavator", "cement mixer"],
        texts: &["CAT"],
    },
    Archetype {
        category: Category::Other,
        size_cells: (6, 3),
        labels: &["trailer", "golf cart", "utility cart"],
        texts: &[],
    },
];

/// Every vehicle type label the generator uses.
pub fn vehicle_labels() -> impl Iterator<Item = &'static str> {
    ARCHETYPES.iter().flat_map(|a| a.labels.iter().copied())
}

/// Every text the generator prints on vehicles.
pub fn vehicle_texts() -> impl Iterator<Item = &'static str> {
    ARCHETYPES.iter().flat_map(|a| a.texts.iter().copied())
}

// Relative frequencies matching ARCHETYPES.
const ARCHETYPE_WEIGHTS: [u32; 5] = [5, 3, 2, 1, 1];

#[derive(Debug, Clone, Copy)]
struct Rect {
    row0: usize,
    col0: usize,
    rows: usize,
    cols: usize,
}

impl Rect {
    fn overlaps_with_gap(&self, other: &Rect, gap: usize) -> bool {
        let sep_r = self.row0 + self.rows + gap <= other.row0 || other.row0 + other.rows + gap <= self.row0;
        let sep_c = self.col0 + self.cols + gap <= other.col0 || other.col0 + other.cols + gap <= self.col0;
        !(sep_r || sep_c)
    }

    fn cells(&self) -> Vec<(usize, usize)> {
        (self.row0..self.row0 + self.rows)
            .flat_map(|r| (self.col0..self.col0 + self.cols).map(move |c| (r, c)))
            .collect()
    }

    /// Metric extent (x_min, x_max, y_min, y_max) of the cell edges.
    fn extent(&self, meta: &GridMeta) -> (f64, f64, f64, f64) {
        let cs = meta.cell_size_m;
        let x_max = (meta.rows as f64 / 2.0 - self.row0 as f64) * cs;
        let x_min = x_max - self.rows as f64 * cs;
        let y_max = (meta.cols as f64 / 2.0 - self.col0 as f64) * cs;
        let y_min = y_max - self.cols as f64 * cs;
        (x_min, x_max, y_min, y_max)
    }
}

struct Placed {
    rect: Rect,
    archetype: usize,
    color: &'static str,
    label: &'static str,
    status: &'static str,
    text: Option<&'static str>,
}

fn weighted_archetype(rng: &mut ChaCha8Rng) -> usize {
    let total: u32 = ARCHETYPE_WEIGHTS.iter().sum();
    let mut pick = rng.gen_range(0..total);
    for (i, w) in ARCHETYPE_WEIGHTS.iter().enumerate() {
        if pick < *w {
            return i;
        }
        pick -= w;
    }
    ARCHETYPE_WEIGHTS.len() - 1
}

fn place(rng: &mut ChaCha8Rng, meta: &GridMeta, size: (usize, usize), placed: &[Placed]) -> Option<Rect> {
    let cs = meta.cell_size_m;
    let (hx, hy) = meta.half_extent_m();
    let rx = PLACEMENT_RADIUS_M.min(hx - cs);
    let ry = PLACEMENT_RADIUS_M.min(hy - cs);
    for _ in 0..MAX_ATTEMPTS_PER_OBJECT {
        let (rows, cols) = if rng.gen_bool(0.2) { (size.1, size.0) } else { size };
        let row_lo = ((hx - rx) / cs).ceil() as usize;
        let row_hi = ((hx + rx) / cs).floor() as usize;
        let col_lo = ((hy - ry) / cs).ceil() as usize;
        let col_hi = ((hy + ry) / cs).floor() as usize;
        if row_hi < row_lo + rows || col_hi < col_lo + cols {
            return None;
        }
        let rect = Rect {
            row0: rng.gen_range(row_lo..=row_hi - rows),
            col0: rng.gen_range(col_lo..=col_hi - cols),
            rows,
            cols,
        };
        let (x0, x1, y0, y1) = rect.extent(meta);
        let hits_ego = x0 < EGO_CLEARANCE_M.0 && x1 > -EGO_CLEARANCE_M.0 && y0 < EGO_CLEARANCE_M.1 && y1 > -EGO_CLEARANCE_M.1;
        if hits_ego {
            continue;
        }
        if placed.iter().any(|p| p.rect.overlaps_with_gap(&rect, BLOB_GAP_CELLS)) {
            continue;
        }
        return Some(rect);
    }
    None
}

fn f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

fn outline_points(rect: &Rect, meta: &GridMeta, out: &mut Vec<Point3>) {
    let (x0, x1, y0, y1) = rect.extent(meta);
    let nx = ((x1 - x0) / LIDAR_STEP_M).round() as usize;
    let ny = ((y1 - y0) / LIDAR_STEP_M).round() as usize;
    let mut ring = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        ring.push((x0 + i as f64 * LIDAR_STEP_M, y0));
    }
    for j in 0..ny {
        ring.push((x1, y0 + j as f64 * LIDAR_STEP_M));
    }
    for i in 0..nx {
        ring.push((x1 - i as f64 * LIDAR_STEP_M, y1));
    }
    for j in 0..ny {
        ring.push((x0, y1 - j as f64 * LIDAR_STEP_M));
    }
    for &z in &LIDAR_HEIGHTS_M {
        for &(x, y) in &ring {
            out.push([f32_exact(x), f32_exact(y), f32_exact(z)]);
        }
    }
}

fn paint_roads(grid: &mut BevGrid) {
    let meta = grid.meta;
    for r in 0..meta.rows {
        for c in 0..meta.cols {
            let (x, y) = meta.cell_to_metric(r, c).expect("in bounds");
            // main road along the heading plus a cross street ahead
            if y.abs() < 7.0 || (x - 20.0).abs() < 6.0 {
                grid.set_road(r, c, true);
            }
        }
    }
}

/// Builds a deterministic synthetic scene. The same seed and params always
/// produce an identical bundle.
pub fn generate_synthetic_scene(seed: u64, params: &SynthParams) -> Result<SceneBundle, SynthError> {
    let meta = params.grid_meta;
    meta.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<Placed> = Vec::with_capacity(params.n_objects);
    for _ in 0..params.n_objects {
        let archetype = weighted_archetype(&mut rng);
        let a = &ARCHETYPES[archetype];
        let Some(rect) = place(&mut rng, &meta, a.size_cells, &placed) else {
            return Err(SynthError::Capacity {
                placed: placed.len(),
                requested: params.n_objects,
            });
        };
        let text = if !a.texts.is_empty() && rng.gen_bool(0.4) {
            a.texts.choose(&mut rng).copied()
        } else {
            None
        };
        placed.push(Placed {
            rect,
            archetype,
            color: COLORS.choose(&mut rng).expect("non-empty"),
            label: a.labels.choose(&mut rng).expect("non-empty"),
            status: STATUSES.choose(&mut rng).expect("non-empty"),
            text,
        });
    }
    let background = *BACKGROUNDS.choose(&mut rng).expect("non-empty");

    // ids follow raster order of each blob's first cell, like extraction
    placed.sort_by_key(|p| (p.rect.row0, p.rect.col0));

    let mut grid = BevGrid::empty(meta)?;
    paint_roads(&mut grid);
    let mut lidar_points = Vec::new();
    let mut gt_objects = Vec::with_capacity(placed.len());
    for (i, p) in placed.iter().enumerate() {
        let cells = p.rect.cells();
        for &(r, c) in &cells {
            grid.set_vehicle(r, c, true);
        }
        outline_points(&p.rect, &meta, &mut lidar_points);
        let a = &ARCHETYPES[p.archetype];
        let mut obj = MapObject::from_cells(i as ObjectId + 1, cells, &meta);
        obj.category = Some(a.category);
        let mut fg = format!("a {} {} {}", p.color, p.label, p.status);
        if let Some(t) = p.text {
            fg.push_str(&format!(", with the text \"{t}\" printed on its side"));
        }
        obj.crop_descriptions = CropDescriptions {
            foreground_text: fg,
            background_text: background.to_string(),
            ocr_text: p.text.map(str::to_string),
            ..Default::default()
        };
        let mut attrs = Map::new();
        attrs.insert("color".into(), json!(p.color));
        attrs.insert("type".into(), json!(p.label));
        attrs.insert("status".into(), json!(p.status));
        obj.extra.insert("attributes".into(), attrs.into());
        gt_objects.push(obj);
    }

    let cameras = canonical_rig(params.rig);
    let image_paths: BTreeMap<String, String> = cameras
        .iter()
        .map(|c| (c.name.clone(), format!("{}.png", c.name)))
        .collect();
    Ok(SceneBundle {
        scene_token: format!("synth-{seed:06}"),
        bev_source: BevSource::Synthetic,
        grid,
        cameras,
        image_paths,
        lidar_points,
        gt_objects: Some(gt_objects),
    })
}
