//! Object extraction from the vehicle channel by connected-component labeling.

use std::collections::VecDeque;

use crate::grid::BevGrid;
use crate::map::{MapObject, ObjectId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractConfig {
    pub connectivity: Connectivity,
    /// Components with fewer cells are treated as noise.
    pub min_cells: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Eight,
            min_cells: 2,
        }
    }
}

const N4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
const N8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Labels vehicle components and returns one object per retained component.
///
/// Ids run 1..N in raster order of each component's first cell; cells within
/// an object are sorted in raster order.
pub fn extract_objects(grid: &BevGrid, cfg: &ExtractConfig) -> Vec<MapObject> {
    let meta = grid.meta;
    let mask = grid.vehicle_mask();
    let mut visited = vec![false; mask.len()];
    let neighbours: &[(isize, isize)] = match cfg.connectivity {
        Connectivity::Four => &N4,
        Connectivity::Eight => &N8,
    };
    let mut objects = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / meta.cols, i % meta.cols);
            cells.push((r, c));
            for &(dr, dc) in neighbours {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr as usize >= meta.rows || nc as usize >= meta.cols {
                    continue;
                }
                let j = meta.index(nr as usize, nc as usize);
                if mask[j] && !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if cells.len() < cfg.min_cells.max(1) {
            continue;
        }
        cells.sort_unstable();
        let id = objects.len() as ObjectId + 1;
        objects.push(MapObject::from_cells(id, cells, &meta));
    }
    objects
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMeta;

    fn grid_with(cells: &[(usize, usize)]) -> BevGrid {
        let mut g = BevGrid::empty(GridMeta::default()).unwrap();
        for &(r, c) in cells {
            g.set_vehicle(r, c, true);
        }
        g
    }

    #[test]
    fn block_2x2_is_one_square_meter() {
        let g = grid_with(&[(10, 10), (10, 11), (11, 10), (11, 11)]);
        let objs = extract_objects(&g, &ExtractConfig::default());
        assert_eq!(objs.len(), 1);
        assert_eq!(objs[0].area_m2, 1.0);
        assert_eq!(objs[0].object_id, 1);
    }

    #[test]
    fn sixteen_cells_give_area_four() {
        let cells: Vec<_> = (0..4).flat_map(|r| (0..4).map(move |c| (90 + r, 94 + c))).collect();
        let objs = extract_objects(&grid_with(&cells), &ExtractConfig::default());
        assert_eq!(objs.len(), 1);
        assert_eq!(objs[0].area_m2, 4.0);
        // rows 90..94 have centers 4.75..3.25, cols 94..98 centers 2.75..1.25
        assert_eq!(objs[0].position, (4.0, 2.0));
    }

    #[test]
    fn diagonal_touch_joins_under_eight_connectivity_only() {
        let g = grid_with(&[(5, 5), (5, 6), (6, 7), (6, 8)]);
        assert_eq!(extract_objects(&g, &ExtractConfig::default()).len(), 1);
        let four = ExtractConfig {
            connectivity: Connectivity::Four,
            min_cells: 2,
        };
        assert_eq!(extract_objects(&g, &four).len(), 2);
    }

    #[test]
    fn separated_blobs_and_noise() {
        // two blobs separated by an empty cell plus one single-cell speck
        let g = grid_with(&[(5, 5), (5, 6), (5, 8), (6, 8), (20, 20)]);
        let objs = extract_objects(&g, &ExtractConfig::default());
        assert_eq!(objs.len(), 2);
        assert_eq!(objs[0].cells, vec![(5, 5), (5, 6)]);
        assert_eq!(objs[1].cells, vec![(5, 8), (6, 8)]);
        let keep_all = ExtractConfig {
            min_cells: 1,
            ..Default::default()
        };
        assert_eq!(extract_objects(&g, &keep_all).len(), 3);
    }

    #[test]
    fn empty_mask() {
        let g = BevGrid::empty(GridMeta::default()).unwrap();
        assert!(extract_objects(&g, &ExtractConfig::default()).is_empty());
    }
}
