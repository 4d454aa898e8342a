//! BEV-to-image correspondence: nearest LiDAR points per object, pinhole
//! projection, best-camera choice and crop boxes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::ObjectId;

/// Points at or behind this depth (meters) are never projected.
pub const DEPTH_EPS: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("LiDAR scan is empty")]
    NoPoints,
    #[error("no camera sees at least {required} points (best: {best})")]
    NotVisible { required: usize, best: usize },
    #[error("no projected point lies inside the image")]
    EmptyCrop,
    #[error("invalid camera {name}: {reason}")]
    InvalidCamera { name: String, reason: String },
    #[error("invalid correspondence config: {0}")]
    InvalidConfig(String),
}

pub type Point3 = [f64; 3];

/// Pinhole camera with ego-to-camera extrinsics (`p_cam = R p + t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub name: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub image_w: u32,
    pub image_h: u32,
}

impl CameraModel {
    /// Camera at `center` (ego frame) looking horizontally along `yaw`
    /// radians (0 = forward, positive turns left), with square pixels and
    /// the given horizontal field of view.
    pub fn looking_at_yaw(
        name: impl Into<String>,
        yaw: f64,
        center: Point3,
        hfov: f64,
        image_w: u32,
        image_h: u32,
    ) -> Self {
        let f = (image_w as f64 / 2.0) / (hfov / 2.0).tan();
        let (s, c) = yaw.sin_cos();
        // rows: camera x (right), camera y (down), camera z (optical axis)
        let rotation = [[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]];
        let r = Matrix3::from_row_slice(&rotation.concat());
        let t = -(r * Vector3::from(center));
        Self {
            name: name.into(),
            fx: f,
            fy: f,
            cx: image_w as f64 / 2.0,
            cy: image_h as f64 / 2.0,
            rotation,
            translation: [t.x, t.y, t.z],
            image_w,
            image_h,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.rotation.concat())
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |reason: String| GeometryError::InvalidCamera {
            name: self.name.clone(),
            reason,
        };
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(bad(format!("focal lengths must be positive ({}, {})", self.fx, self.fy)));
        }
        if self.image_w == 0 || self.image_h == 0 {
            return Err(bad("image dimensions must be positive".into()));
        }
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err.is_nan() || err > 1e-6 {
            return Err(bad(format!("rotation is not orthonormal (|RᵀR - I| = {err:e})")));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(bad("translation must be finite".into()));
        }
        Ok(())
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.image_w as f64 && v < self.image_h as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceConfig {
    pub k: usize,
    pub bbox_pad_frac: f64,
    pub min_visible_points: usize,
}

impl Default for CorrespondenceConfig {
    fn default() -> Self {
        Self {
            k: 8,
            bbox_pad_frac: 0.2,
            min_visible_points: 3,
        }
    }
}

impl CorrespondenceConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.min_visible_points == 0 || self.k < self.min_visible_points {
            return Err(GeometryError::InvalidConfig(format!(
                "need k >= min_visible_points >= 1 (k = {}, min_visible_points = {})",
                self.k, self.min_visible_points
            )));
        }
        if !(0.0..=1.0).contains(&self.bbox_pad_frac) {
            return Err(GeometryError::InvalidConfig(format!(
                "bbox_pad_frac must lie in [0, 1], got {}",
                self.bbox_pad_frac
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectCrop {
    pub object_id: ObjectId,
    pub camera_name: String,
    /// (u_min, v_min, u_max, v_max) in pixels.
    pub bbox_px: [f64; 4],
    pub projected_points_px: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Index of the source point in the input slice.
    pub index: usize,
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

#[derive(PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` scan points nearest to `target` in the XY plane, nearest first.
/// Ties go to the lower point index.
pub fn k_closest_lidar_points(
    scan: &[Point3],
    target: (f64, f64),
    k: usize,
) -> Result<Vec<Point3>, GeometryError> {
    if scan.is_empty() {
        return Err(GeometryError::NoPoints);
    }
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
    for (index, p) in scan.iter().enumerate() {
        let (dx, dy) = (p[0] - target.0, p[1] - target.1);
        let cand = Candidate {
            dist2: dx * dx + dy * dy,
            index,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if let Some(worst) = heap.peek() {
            if cand < *worst {
                heap.pop();
                heap.push(cand);
            }
        }
    }
    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .map(|c| scan[c.index])
        .collect())
}

/// Pinhole projection of ego-frame points. Points with depth at or below
/// [`DEPTH_EPS`] are dropped.
pub fn project_to_camera(points: &[Point3], cam: &CameraModel) -> Vec<Projection> {
    let r = cam.rotation_matrix();
    let t = cam.translation_vector();
    points
        .iter()
        .enumerate()
        .filter_map(|(index, p)| {
            let pc = r * Vector3::from(*p) + t;
            if pc.z <= DEPTH_EPS {
                return None;
            }
            Some(Projection {
                index,
                u: cam.fx * (pc.x / pc.z) + cam.cx,
                v: cam.fy * (pc.y / pc.z) + cam.cy,
                depth: pc.z,
            })
        })
        .collect()
}

/// Number of points that project in front of the camera and inside its image.
pub fn visible_count(points: &[Point3], cam: &CameraModel) -> usize {
    project_to_camera(points, cam)
        .iter()
        .filter(|p| cam.in_image(p.u, p.v))
        .count()
}

/// Camera seeing the most points; earlier rig entries win ties.
pub fn select_best_camera<'a>(
    points: &[Point3],
    rig: &'a [CameraModel],
    min_visible_points: usize,
) -> Result<&'a CameraModel, GeometryError> {
    let mut best: Option<(&CameraModel, usize)> = None;
    for cam in rig {
        let n = visible_count(points, cam);
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((cam, n));
        }
    }
    match best {
        Some((cam, n)) if n >= min_visible_points && n > 0 => Ok(cam),
        Some((_, n)) => Err(GeometryError::NotVisible {
            required: min_visible_points,
            best: n,
        }),
        None => Err(GeometryError::NotVisible {
            required: min_visible_points,
            best: 0,
        }),
    }
}

/// Padded, clamped axis-aligned box around the in-image points. The result is
/// always at least 2 px wide and tall.
pub fn compute_crop_bbox(
    points_px: &[(f64, f64)],
    pad_frac: f64,
    image_dims: (u32, u32),
) -> Result<[f64; 4], GeometryError> {
    let (w, h) = (image_dims.0 as f64, image_dims.1 as f64);
    if w < 2.0 || h < 2.0 {
        return Err(GeometryError::EmptyCrop);
    }
    let inside = points_px
        .iter()
        .filter(|(u, v)| *u >= 0.0 && *v >= 0.0 && *u < w && *v < h);
    let mut bounds: Option<[f64; 4]> = None;
    for &(u, v) in inside {
        bounds = Some(match bounds {
            None => [u, v, u, v],
            Some([a, b, c, d]) => [a.min(u), b.min(v), c.max(u), d.max(v)],
        });
    }
    let [u0, v0, u1, v1] = bounds.ok_or(GeometryError::EmptyCrop)?;
    let pad = pad_frac * (u1 - u0).max(v1 - v0);
    let (u0, u1) = fit_span(u0 - pad, u1 + pad, w);
    let (v0, v1) = fit_span(v0 - pad, v1 + pad, h);
    Ok([u0, v0, u1, v1])
}

fn fit_span(lo: f64, hi: f64, limit: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (lo.max(0.0), hi.min(limit));
    if hi - lo < 2.0 {
        let mid = (lo + hi) / 2.0;
        lo = (mid - 1.0).max(0.0);
        hi = lo + 2.0;
        if hi > limit {
            hi = limit;
            lo = limit - 2.0;
        }
    }
    (lo, hi)
}

/// Runs the correspondence chain for one object position.
pub fn locate_object(
    object_id: ObjectId,
    position: (f64, f64),
    scan: &[Point3],
    rig: &[CameraModel],
    cfg: &CorrespondenceConfig,
) -> Result<ObjectCrop, GeometryError> {
    let points = k_closest_lidar_points(scan, position, cfg.k)?;
    let cam = select_best_camera(&points, rig, cfg.min_visible_points)?;
    let projected: Vec<(f64, f64)> = project_to_camera(&points, cam)
        .into_iter()
        .filter(|p| cam.in_image(p.u, p.v))
        .map(|p| (p.u, p.v))
        .collect();
    let bbox_px = compute_crop_bbox(&projected, cfg.bbox_pad_frac, (cam.image_w, cam.image_h))?;
    Ok(ObjectCrop {
        object_id,
        camera_name: cam.name.clone(),
        bbox_px,
        projected_points_px: projected,
    })
}

/// Intersection over union of two boxes in (u_min, v_min, u_max, v_max) form.
pub fn bbox_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: &[f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cam() -> CameraModel {
        CameraModel {
            name: "CAM".into(),
            fx: 500.0,
            fy: 500.0,
            cx: 400.0,
            cy: 400.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            image_w: 800,
            image_h: 800,
        }
    }

    #[test]
    fn k_closest_examples() {
        let scan = [[1.0, 0.0, 0.0], [5.0, 0.0, 0.0], [2.0, 0.0, 1.0]];
        assert_eq!(
            k_closest_lidar_points(&scan, (0.0, 0.0), 2).unwrap(),
            vec![[1.0, 0.0, 0.0], [2.0, 0.0, 1.0]]
        );
        assert_eq!(k_closest_lidar_points(&scan, (0.0, 0.0), 10).unwrap().len(), 3);
        assert_eq!(k_closest_lidar_points(&[], (0.0, 0.0), 1), Err(GeometryError::NoPoints));
    }

    #[test]
    fn k_closest_ties_prefer_lower_index() {
        let scan = [[0.0, 1.0, 0.0], [1.0, 0.0, 7.0], [-1.0, 0.0, 3.0]];
        let got = k_closest_lidar_points(&scan, (0.0, 0.0), 2).unwrap();
        assert_eq!(got, vec![[0.0, 1.0, 0.0], [1.0, 0.0, 7.0]]);
    }

    #[test]
    fn principal_ray_projection() {
        let cam = identity_cam();
        let p = project_to_camera(&[[0.0, 0.0, 5.0], [1.0, 0.0, 5.0]], &cam);
        assert_eq!((p[0].u, p[0].v, p[0].depth), (400.0, 400.0, 5.0));
        assert_eq!((p[1].u, p[1].v, p[1].depth), (500.0, 400.0, 5.0));
    }

    #[test]
    fn points_behind_are_dropped() {
        let cam = identity_cam();
        let p = project_to_camera(&[[0.0, 0.0, -1.0], [0.0, 0.0, DEPTH_EPS], [0.0, 0.0, 1.0]], &cam);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].index, 2);
    }

    #[test]
    fn front_beats_rear() {
        let rig = [
            CameraModel::looking_at_yaw("CAM_BACK", std::f64::consts::PI, [0.0, 0.0, 1.0], 1.2, 800, 600),
            CameraModel::looking_at_yaw("CAM_FRONT", 0.0, [0.0, 0.0, 1.0], 1.2, 800, 600),
        ];
        let pts = [[10.0, 0.0, 1.0], [10.0, 0.5, 1.2], [11.0, -0.5, 0.8]];
        assert_eq!(select_best_camera(&pts, &rig, 3).unwrap().name, "CAM_FRONT");
        let behind = [[-10.0, 0.0, 1.0]; 3];
        let front_only = &rig[1..];
        assert_eq!(
            select_best_camera(&behind, front_only, 3),
            Err(GeometryError::NotVisible { required: 3, best: 0 })
        );
    }

    #[test]
    fn crop_box_examples() {
        let pts = [(100.0, 100.0), (200.0, 150.0)];
        assert_eq!(compute_crop_bbox(&pts, 0.0, (800, 450)).unwrap(), [100.0, 100.0, 200.0, 150.0]);
        assert_eq!(compute_crop_bbox(&pts, 0.2, (800, 450)).unwrap(), [80.0, 80.0, 220.0, 170.0]);
        assert_eq!(compute_crop_bbox(&[(0.0, 0.0)], 0.2, (800, 450)).unwrap(), [0.0, 0.0, 2.0, 2.0]);
        assert_eq!(compute_crop_bbox(&[(-5.0, 3.0)], 0.2, (800, 450)), Err(GeometryError::EmptyCrop));
    }

    #[test]
    fn camera_validation() {
        let mut cam = identity_cam();
        assert!(cam.validate().is_ok());
        cam.rotation[0][0] = 1.1;
        assert!(matches!(cam.validate(), Err(GeometryError::InvalidCamera { .. })));
        let yawed = CameraModel::looking_at_yaw("C", 0.7, [1.0, 0.0, 1.5], 1.0, 640, 480);
        assert!(yawed.validate().is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(CorrespondenceConfig::default().validate().is_ok());
        let bad = CorrespondenceConfig {
            k: 2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn iou_basics() {
        let a = [0.0, 0.0, 10.0, 10.0];
        assert_eq!(bbox_iou(&a, &a), 1.0);
        assert_eq!(bbox_iou(&a, &[20.0, 20.0, 30.0, 30.0]), 0.0);
        assert!((bbox_iou(&a, &[5.0, 0.0, 15.0, 10.0]) - 1.0 / 3.0).abs() < 1e-12);
    }
}
