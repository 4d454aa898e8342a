//! Drawing payload for map viewers: road cells, object outlines and the ego
//! marker, all in the metric map frame (x forward, y left).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bundle::{rle_encode, Rle};
use crate::grid::{BevGrid, GridMeta};
use crate::map::{Category, LanguageEnhancedMap, ObjectId};

pub const RENDER_SCHEMA_VERSION: u32 = 1;

/// Footprint drawn for the ego vehicle, meters (length along x, width along y).
pub const EGO_FOOTPRINT_M: (f64, f64) = (4.5, 2.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoMarker {
    pub position: [f64; 2],
    pub length_m: f64,
    pub width_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderObject {
    pub object_id: ObjectId,
    pub position: [f64; 2],
    pub area: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    pub label: String,
    /// Closed rings of `[x, y]` vertices, last vertex not repeated. Holes run
    /// opposite to outer rings; draw with the even-odd rule.
    pub polygons: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderPayload {
    pub schema_version: u32,
    pub scene_token: String,
    pub grid_meta: GridMeta,
    /// Road cells as (start, length) runs over row-major cell order.
    pub road_rle: Rle,
    pub ego: EgoMarker,
    pub objects: Vec<RenderObject>,
}

type Corner = (i64, i64);

/// Outline rings of a set of grid cells, in corner coordinates (row, col).
pub fn cell_outline(cells: &[(usize, usize)]) -> Vec<Vec<Corner>> {
    let set: BTreeSet<(i64, i64)> = cells.iter().map(|&(r, c)| (r as i64, c as i64)).collect();
    let filled = |r: i64, c: i64| set.contains(&(r, c));
    // Boundary edges walk clockwise on screen (rows down, cols right).
    let mut edges: BTreeMap<Corner, Vec<Corner>> = BTreeMap::new();
    let mut add = |a: Corner, b: Corner| edges.entry(a).or_default().push(b);
    for &(r, c) in &set {
        if !filled(r - 1, c) {
            add((r, c), (r, c + 1));
        }
        if !filled(r, c + 1) {
            add((r, c + 1), (r + 1, c + 1));
        }
        if !filled(r + 1, c) {
            add((r + 1, c + 1), (r + 1, c));
        }
        if !filled(r, c - 1) {
            add((r + 1, c), (r, c));
        }
    }
    let mut rings = Vec::new();
    while let Some((&start, _)) = edges.iter().find(|(_, v)| !v.is_empty()) {
        let mut ring = vec![start];
        let mut prev = start;
        let mut cur = edges.get_mut(&start).expect("present").remove(0);
        while cur != start {
            ring.push(cur);
            let outs = edges.get_mut(&cur).expect("boundary is closed");
            let d_in = (cur.0 - prev.0, cur.1 - prev.1);
            // at a pinch point take the sharpest turn so the rings stay apart
            let pick = (0..outs.len())
                .min_by_key(|&i| {
                    let d = (outs[i].0 - cur.0, outs[i].1 - cur.1);
                    d_in.0 * d.1 - d_in.1 * d.0
                })
                .expect("an outgoing edge");
            prev = cur;
            cur = outs.remove(pick);
        }
        rings.push(simplify(ring));
    }
    rings
}

fn simplify(ring: Vec<Corner>) -> Vec<Corner> {
    let n = ring.len();
    (0..n)
        .filter(|&i| {
            let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            (b.0 - a.0) * (c.1 - b.1) != (b.1 - a.1) * (c.0 - b.0)
        })
        .map(|i| ring[i])
        .collect()
}

fn corner_to_metric(meta: &GridMeta, (r, c): Corner) -> [f64; 2] {
    [
        (meta.rows as f64 / 2.0 - r as f64) * meta.cell_size_m,
        (meta.cols as f64 / 2.0 - c as f64) * meta.cell_size_m,
    ]
}

/// Builds the payload; road cells come from `grid` when it is given.
pub fn render_payload(map: &LanguageEnhancedMap, grid: Option<&BevGrid>) -> RenderPayload {
    let meta = map.grid_meta;
    let objects = map
        .objects
        .iter()
        .map(|o| RenderObject {
            object_id: o.object_id,
            position: [o.x(), o.y()],
            area: o.area_m2,
            category: o.category,
            label: o.object_id.to_string(),
            polygons: cell_outline(&o.cells)
                .into_iter()
                .map(|ring| ring.into_iter().map(|p| corner_to_metric(&meta, p)).collect())
                .collect(),
        })
        .collect();
    RenderPayload {
        schema_version: RENDER_SCHEMA_VERSION,
        scene_token: map.scene_token.clone(),
        grid_meta: meta,
        road_rle: grid.map(|g| rle_encode(g.road_mask())).unwrap_or_default(),
        ego: EgoMarker {
            position: [0.0, 0.0],
            length_m: EGO_FOOTPRINT_M.0,
            width_m: EGO_FOOTPRINT_M.1,
        },
        objects,
    }
}

/// Signed shoelace area of a ring in its own coordinates.
pub fn ring_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}
