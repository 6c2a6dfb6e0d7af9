//! Vehicle-relative perception grid.
//!
//! Cell `(row, col)` is centered at `((col − anchor_col)·s, (anchor_row − row)·s)`
//! in the vehicle frame (x forward, y left), so columns run forward and
//! row 0 is the far-left edge. Entries: −1 non-drivable or sensed
//! obstacle, 0 free, +1 target.

use super::scenario::Scenario;
use super::sensor::SensorScan;
use crate::dynamics::VehicleState;
use crate::geometry::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub anchor_row: usize,
    pub anchor_col: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 32, cols: 32, cell_size: 1.0, anchor_row: 16, anchor_col: 6 }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell containing a vehicle-frame point, if inside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let col = self.anchor_col as f64 + (p.x / self.cell_size + 0.5).floor();
        let row = self.anchor_row as f64 - (p.y / self.cell_size + 0.5).floor();
        if col < 0.0 || row < 0.0 || col >= self.cols as f64 || row >= self.rows as f64 {
            None
        } else {
            Some((row as usize, col as usize))
        }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Vec2 {
        Vec2::new(
            (col as f64 - self.anchor_col as f64) * self.cell_size,
            (self.anchor_row as f64 - row as f64) * self.cell_size,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerceptionGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries in {−1, 0, 1}.
    pub cells: Vec<i8>,
}

impl PerceptionGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, cells: vec![0; rows * cols] }
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: i8) {
        self.cells[row * self.cols + col] = v;
    }

    pub fn count(&self, v: i8) -> usize {
        self.cells.iter().filter(|&&c| c == v).count()
    }
}

pub fn render_grid(
    state: &VehicleState,
    scenario: &Scenario,
    scan: &SensorScan,
    spec: &GridSpec,
) -> PerceptionGrid {
    let mut grid = PerceptionGrid::zeros(spec.rows, spec.cols);
    let origin = state.position();
    let (s, c) = state.heading.sin_cos();
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let p = spec.cell_center(row, col);
            let world = Vec2::new(origin.x + c * p.x - s * p.y, origin.y + s * p.x + c * p.y);
            if !scenario.boundary.contains(world) {
                grid.set(row, col, -1);
            }
        }
    }
    for hit in scan.local_hits() {
        if let Some((r, cc)) = spec.cell_of(hit) {
            grid.set(r, cc, -1);
        }
    }
    let rel = scenario.target.position() - origin;
    let local = Vec2::new(c * rel.x + s * rel.y, -s * rel.x + c * rel.y);
    if let Some((r, cc)) = spec.cell_of(local) {
        grid.set(r, cc, 1);
    }
    grid
}
