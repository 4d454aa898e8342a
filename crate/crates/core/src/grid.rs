//! BEV grid geometry.
//!
//! The grid is centered on the ego vehicle. Row 0 is the far-front edge and
//! column 0 the far-left edge; the metric frame has x pointing forward and y
//! pointing left.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("cell ({row}, {col}) is outside the {rows}x{cols} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("point ({x}, {y}) m is outside the grid extent")]
    OutOfRange { x: f64, y: f64 },
    #[error("invalid grid: {0}")]
    Invalid(String),
}

/// Grid dimensions and resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub rows: usize,
    pub cols: usize,
    pub cell_size_m: f64,
}

impl Default for GridMeta {
    fn default() -> Self {
        Self {
            rows: 200,
            cols: 200,
            cell_size_m: 0.5,
        }
    }
}

impl GridMeta {
    pub fn new(rows: usize, cols: usize, cell_size_m: f64) -> Result<Self, GridError> {
        let meta = Self {
            rows,
            cols,
            cell_size_m,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(GridError::Invalid("rows and cols must be positive".into()));
        }
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(GridError::Invalid(format!(
                "cell_size_m must be positive, got {}",
                self.cell_size_m
            )));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_area_m2(&self) -> f64 {
        self.cell_size_m * self.cell_size_m
    }

    /// Half-extents of the grid in meters along x and y.
    pub fn half_extent_m(&self) -> (f64, f64) {
        (
            self.rows as f64 * self.cell_size_m / 2.0,
            self.cols as f64 * self.cell_size_m / 2.0,
        )
    }

    pub fn contains_cell(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols
    }

    /// Row-major linear index of a cell.
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Center of a cell in the ego frame.
    pub fn cell_to_metric(&self, row: usize, col: usize) -> Result<(f64, f64), GridError> {
        if !self.contains_cell(row, col) {
            return Err(GridError::OutOfBounds {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        let x = (self.rows as f64 / 2.0 - row as f64 - 0.5) * self.cell_size_m;
        let y = (self.cols as f64 / 2.0 - col as f64 - 0.5) * self.cell_size_m;
        Ok((x, y))
    }

    /// Cell containing a metric point.
    ///
    /// Points on a cell boundary go to the cell nearer the ego vehicle; the
    /// origin itself maps to the front-left cell of the center block.
    pub fn metric_to_cell(&self, x: f64, y: f64) -> Result<(usize, usize), GridError> {
        let (hx, hy) = self.half_extent_m();
        if !(x.is_finite() && y.is_finite()) || x.abs() >= hx || y.abs() >= hy {
            return Err(GridError::OutOfRange { x, y });
        }
        let row = quantize(self.rows as f64 / 2.0 - x / self.cell_size_m, x);
        let col = quantize(self.cols as f64 / 2.0 - y / self.cell_size_m, y);
        Ok((row, col))
    }
}

fn quantize(t: f64, coord: f64) -> usize {
    let floor = t.floor();
    if t == floor && coord <= 0.0 {
        // boundary on the rear/right side (or the origin): step back toward ego
        (floor - 1.0) as usize
    } else {
        floor as usize
    }
}

/// Top-view semantic grid with vehicle and road channels.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub meta: GridMeta,
    vehicle_mask: Vec<bool>,
    road_mask: Vec<bool>,
}

impl BevGrid {
    pub fn empty(meta: GridMeta) -> Result<Self, GridError> {
        meta.validate()?;
        let n = meta.cell_count();
        Ok(Self {
            meta,
            vehicle_mask: vec![false; n],
            road_mask: vec![false; n],
        })
    }

    pub fn from_masks(
        meta: GridMeta,
        vehicle_mask: Vec<bool>,
        road_mask: Vec<bool>,
    ) -> Result<Self, GridError> {
        meta.validate()?;
        let n = meta.cell_count();
        if vehicle_mask.len() != n || road_mask.len() != n {
            return Err(GridError::Invalid(format!(
                "mask lengths ({}, {}) do not match {} cells",
                vehicle_mask.len(),
                road_mask.len(),
                n
            )));
        }
        Ok(Self {
            meta,
            vehicle_mask,
            road_mask,
        })
    }

    pub fn vehicle_mask(&self) -> &[bool] {
        &self.vehicle_mask
    }

    pub fn road_mask(&self) -> &[bool] {
        &self.road_mask
    }

    pub fn is_vehicle(&self, row: usize, col: usize) -> bool {
        self.meta.contains_cell(row, col) && self.vehicle_mask[self.meta.index(row, col)]
    }

    pub fn set_vehicle(&mut self, row: usize, col: usize, value: bool) {
        let i = self.meta.index(row, col);
        self.vehicle_mask[i] = value;
    }

    pub fn set_road(&mut self, row: usize, col: usize, value: bool) {
        let i = self.meta.index(row, col);
        self.road_mask[i] = value;
    }

    pub fn vehicle_cell_count(&self) -> usize {
        self.vehicle_mask.iter().filter(|&&v| v).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_centers_match_formula() {
        let g = GridMeta::default();
        assert_eq!(g.cell_to_metric(99, 99).unwrap(), (0.25, 0.25));
        assert_eq!(g.cell_to_metric(0, 0).unwrap(), (49.75, 49.75));
        assert_eq!(g.cell_to_metric(199, 199).unwrap(), (-49.75, -49.75));
    }

    #[test]
    fn metric_to_cell_examples() {
        let g = GridMeta::default();
        assert_eq!(g.metric_to_cell(0.25, 0.25).unwrap(), (99, 99));
        assert_eq!(g.metric_to_cell(49.75, 49.75).unwrap(), (0, 0));
        assert_eq!(g.metric_to_cell(0.0, 0.0).unwrap(), (99, 99));
    }

    #[test]
    fn boundaries_round_toward_ego() {
        let g = GridMeta::default();
        // x = 0.5 separates rows 98 [0.5, 1.0) and 99 [0, 0.5)
        assert_eq!(g.metric_to_cell(0.5, 0.1).unwrap().0, 99);
        // x = -0.5 separates rows 100 and 101
        assert_eq!(g.metric_to_cell(-0.5, 0.1).unwrap().0, 100);
        assert_eq!(g.metric_to_cell(0.1, -0.5).unwrap().1, 100);
    }

    #[test]
    fn out_of_range_and_bounds() {
        let g = GridMeta::default();
        assert!(matches!(
            g.cell_to_metric(200, 0),
            Err(GridError::OutOfBounds { row: 200, .. })
        ));
        assert!(matches!(
            g.metric_to_cell(50.0, 0.0),
            Err(GridError::OutOfRange { .. })
        ));
        assert!(g.metric_to_cell(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_meta() {
        assert!(GridMeta::new(0, 10, 0.5).is_err());
        assert!(GridMeta::new(10, 10, 0.0).is_err());
        assert!(BevGrid::from_masks(GridMeta::new(2, 2, 1.0).unwrap(), vec![false; 3], vec![false; 4]).is_err());
    }
}
