//! Scene bundles: the raw inputs of one scene and their on-disk layout.
//!
//! A bundle directory holds `scene.json` (metadata, cameras, run-length
//! encoded grid channels, optional ground truth), `lidar.bin` (little-endian
//! f32 triples, no header) and the camera images named in `image_paths`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraModel, GeometryError, Point3};
use crate::grid::{BevGrid, GridError, GridMeta};
use crate::map::{BevSource, MapObject};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const SCENE_FILE: &str = "scene.json";
pub const LIDAR_FILE: &str = "lidar.bin";
pub const MAX_CAMERAS: usize = 6;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid scene.json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported bundle format_version {0}")]
    Version(u32),
    #[error("{channel} RLE run ({start}, {len}) exceeds {cells} cells")]
    RleLength {
        channel: &'static str,
        start: usize,
        len: usize,
        cells: usize,
    },
    #[error("{channel} RLE runs overlap or are out of order at start {start}")]
    RleOrder { channel: &'static str, start: usize },
    #[error("lidar.bin has {0} bytes, not a multiple of 12")]
    LidarLength(usize),
    #[error("LiDAR point {0} is not finite")]
    NonFinitePoint(usize),
    #[error(transparent)]
    Camera(#[from] GeometryError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("image path given for unknown camera {0}")]
    UnknownCamera(String),
    #[error("bundle has {0} cameras, at most {MAX_CAMERAS} supported")]
    TooManyCameras(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub scene_token: String,
    /// Where the grid came from; recorded in map provenance.
    pub bev_source: BevSource,
    pub grid: BevGrid,
    pub cameras: Vec<CameraModel>,
    /// Camera name to image file, relative to the bundle directory.
    pub image_paths: BTreeMap<String, String>,
    pub lidar_points: Vec<Point3>,
    pub gt_objects: Option<Vec<MapObject>>,
}

impl SceneBundle {
    pub fn validate(&self) -> Result<(), BundleError> {
        if self.cameras.len() > MAX_CAMERAS {
            return Err(BundleError::TooManyCameras(self.cameras.len()));
        }
        for cam in &self.cameras {
            cam.validate()?;
        }
        if let Some(name) = self
            .image_paths
            .keys()
            .find(|n| !self.cameras.iter().any(|c| &c.name == *n))
        {
            return Err(BundleError::UnknownCamera(name.clone()));
        }
        if let Some(i) = self
            .lidar_points
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(BundleError::NonFinitePoint(i));
        }
        Ok(())
    }

    pub fn camera(&self, name: &str) -> Option<&CameraModel> {
        self.cameras.iter().find(|c| c.name == name)
    }
}

/// (start_index, run_length) pairs over row-major cell order.
pub type Rle = Vec<(usize, usize)>;

pub fn rle_encode(mask: &[bool]) -> Rle {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if mask[i] {
            let start = i;
            while i < mask.len() && mask[i] {
                i += 1;
            }
            runs.push((start, i - start));
        } else {
            i += 1;
        }
    }
    runs
}

pub fn rle_decode(runs: &[(usize, usize)], cells: usize, channel: &'static str) -> Result<Vec<bool>, BundleError> {
    let mut mask = vec![false; cells];
    let mut next_free = 0;
    for &(start, len) in runs {
        if start.checked_add(len).is_none_or(|end| end > cells) {
            return Err(BundleError::RleLength {
                channel,
                start,
                len,
                cells,
            });
        }
        if start < next_free {
            return Err(BundleError::RleOrder { channel, start });
        }
        mask[start..start + len].iter_mut().for_each(|m| *m = true);
        next_free = start + len;
    }
    Ok(mask)
}

#[derive(Serialize, Deserialize)]
struct GridRecord {
    rows: usize,
    cols: usize,
    cell_size_m: f64,
    vehicle_rle: Rle,
    road_rle: Rle,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    format_version: u32,
    scene_token: String,
    #[serde(default = "default_source")]
    bev_source: BevSource,
    grid: GridRecord,
    cameras: Vec<CameraModel>,
    image_paths: BTreeMap<String, String>,
    #[serde(default)]
    gt_objects: Option<Vec<MapObject>>,
}

fn default_source() -> BevSource {
    BevSource::Predicted
}

pub fn encode_lidar(points: &[Point3]) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * 12);
    for p in points {
        for v in p {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_lidar(bytes: &[u8]) -> Result<Vec<Point3>, BundleError> {
    if !bytes.len().is_multiple_of(12) {
        return Err(BundleError::LidarLength(bytes.len()));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    Ok(bytes
        .chunks_exact(12)
        .map(|c| [f(&c[0..4]), f(&c[4..8]), f(&c[8..12])])
        .collect())
}

fn read(path: &Path) -> Result<Vec<u8>, BundleError> {
    fs::read(path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            BundleError::MissingFile(path.to_path_buf())
        } else {
            BundleError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), BundleError> {
    fs::write(path, bytes).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `scene.json` and `lidar.bin`. LiDAR coordinates are stored as f32.
pub fn save_bundle(bundle: &SceneBundle, dir: &Path) -> Result<(), BundleError> {
    bundle.validate()?;
    fs::create_dir_all(dir).map_err(|source| BundleError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write(&dir.join(SCENE_FILE), scene_json(bundle).as_bytes())?;
    write(&dir.join(LIDAR_FILE), &encode_lidar(&bundle.lidar_points))
}

/// `scene.json` contents for a bundle.
pub fn scene_json(bundle: &SceneBundle) -> String {
    let meta = bundle.grid.meta;
    let record = SceneRecord {
        format_version: BUNDLE_FORMAT_VERSION,
        scene_token: bundle.scene_token.clone(),
        bev_source: bundle.bev_source,
        grid: GridRecord {
            rows: meta.rows,
            cols: meta.cols,
            cell_size_m: meta.cell_size_m,
            vehicle_rle: rle_encode(bundle.grid.vehicle_mask()),
            road_rle: rle_encode(bundle.grid.road_mask()),
        },
        cameras: bundle.cameras.clone(),
        image_paths: bundle.image_paths.clone(),
        gt_objects: bundle.gt_objects.clone(),
    };
    let mut s = serde_json::to_string_pretty(&record).expect("bundle metadata serializes");
    s.push('\n');
    s
}

pub fn load_bundle(dir: &Path) -> Result<SceneBundle, BundleError> {
    let record: SceneRecord = serde_json::from_slice(&read(&dir.join(SCENE_FILE))?)?;
    if record.format_version != BUNDLE_FORMAT_VERSION {
        return Err(BundleError::Version(record.format_version));
    }
    let meta = GridMeta::new(record.grid.rows, record.grid.cols, record.grid.cell_size_m)?;
    let cells = meta.cell_count();
    let vehicle = rle_decode(&record.grid.vehicle_rle, cells, "vehicle")?;
    let road = rle_decode(&record.grid.road_rle, cells, "road")?;
    let lidar_points = decode_lidar(&read(&dir.join(LIDAR_FILE))?)?;
    let bundle = SceneBundle {
        scene_token: record.scene_token,
        bev_source: record.bev_source,
        grid: BevGrid::from_masks(meta, vehicle, road)?,
        cameras: record.cameras,
        image_paths: record.image_paths,
        lidar_points,
        gt_objects: record.gt_objects,
    };
    bundle.validate()?;
    Ok(bundle)
}
