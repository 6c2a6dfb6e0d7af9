//! Attention maps: squared first-layer feature maps summed over channels.

use std::io::Write;

use crate::env::Observation;
use crate::error::Result;
use crate::nn::{Batch, Network};
use crate::world::PerceptionGrid;

/// Non-negative `(rows/2) × (cols/2)` map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl AttentionMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Values divided by the maximum (all zeros stay zero).
    pub fn normalized(&self) -> Vec<f64> {
        let m = self.max();
        self.values.iter().map(|v| if m > 0.0 { v / m } else { 0.0 }).collect()
    }

    /// One CSV line per row, no header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix(out, self.cols, self.values.iter().map(|v| format!("{v:e}")))
    }
}

/// Attention maps for a batch of observations.
pub fn attention_maps(net: &Network, obs: &[Observation]) -> Result<Vec<AttentionMap>> {
    let cache = net.forward(&Batch::from_observations(obs))?;
    let t = net.topology();
    let (rows, cols) = (t.grid_rows / 2, t.grid_cols / 2);
    Ok(net.attention(&cache).into_iter().map(|values| AttentionMap { rows, cols, values }).collect())
}

pub fn attention(net: &Network, obs: &Observation) -> Result<AttentionMap> {
    Ok(attention_maps(net, std::slice::from_ref(obs))?.remove(0))
}

/// Writes a perception grid as CSV (one line per row).
pub fn write_grid_csv<W: Write>(grid: &PerceptionGrid, out: W) -> Result<()> {
    write_matrix(out, grid.cols, grid.cells.iter().map(|c| c.to_string()))
}

fn write_matrix<W: Write>(out: W, cols: usize, cells: impl Iterator<Item = String>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let cells: Vec<String> = cells.collect();
    for row in cells.chunks(cols) {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
