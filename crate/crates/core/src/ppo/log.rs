//! Per-epoch metrics, the training log file and the stopping rule.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    /// Phase the epoch was trained in.
    pub phase: u8,
    /// Episodes that ended inside the rollout.
    pub episodes: usize,
    pub mean_reward: f64,
    pub success: f64,
    pub collision: f64,
    pub timeout: f64,
    pub overspeed: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Fraction of minibatch samples on the clipped branch.
    pub clip_fraction: f64,
    pub sigma_accel: f64,
    pub sigma_steer: f64,
}

/// Append-only CSV training log.
pub struct TrainingLog {
    writer: csv::Writer<std::fs::File>,
}

impl TrainingLog {
    /// Creates the file, or appends to it when resuming.
    pub fn open(path: &Path, append: bool) -> Result<Self> {
        let exists = append && path.exists() && std::fs::metadata(path)?.len() > 0;
        let file = std::fs::OpenOptions::new().create(true).append(append).write(true).truncate(!append).open(path)?;
        let writer = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
        Ok(Self { writer })
    }

    pub fn write(&mut self, row: &EpochMetrics) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Vec<EpochMetrics>> {
        let mut rdr = csv::Reader::from_path(path)?;
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<EpochMetrics>, _>>()?;
        Ok(rows)
    }
}

/// Stops training once the moving-average reward has stopped improving.
///
/// Every `window` epochs the mean reward of the last `window` epochs is
/// compared with the previous such mean; an improvement below `tolerance`
/// (relative to the previous mean's magnitude) counts as stalled, and
/// `patience` consecutive stalled checks signal convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceMonitor {
    window: usize,
    tolerance: f64,
    patience: usize,
    rewards: Vec<f64>,
    previous: Option<f64>,
    stalled: usize,
}

impl ConvergenceMonitor {
    pub fn new(window: usize, tolerance: f64, patience: usize) -> Self {
        Self { window, tolerance, patience, rewards: Vec::new(), previous: None, stalled: 0 }
    }

    /// Records one epoch's mean reward; returns true once converged.
    pub fn push(&mut self, mean_reward: f64) -> bool {
        self.rewards.push(mean_reward);
        if self.rewards.len() % self.window != 0 {
            return false;
        }
        let tail = &self.rewards[self.rewards.len() - self.window..];
        let avg = tail.iter().sum::<f64>() / self.window as f64;
        if let Some(prev) = self.previous {
            let gain = (avg - prev) / prev.abs().max(1e-9);
            if gain < self.tolerance {
                self.stalled += 1;
            } else {
                self.stalled = 0;
            }
        }
        self.previous = Some(avg);
        self.stalled >= self.patience
    }

    pub fn converged(&self) -> bool {
        self.stalled >= self.patience
    }
}
