//! Deployment-side pieces: the combined controller, batch evaluation,
//! attention maps and trace replay.

mod attention;
mod controller;
mod evaluate;
mod replay;

pub use attention::{attention, attention_maps, write_grid_csv, AttentionMap};
pub use controller::{desired_steer, Control, DeepController, LatencyStats, Mode, Policy, STEER_HORIZON};
pub use evaluate::{eval_scenarios, evaluate, run_traced, task_seed, EvaluationReport, ReportRow, TaskOutcome};
pub use replay::{replay, PlotData};

#[cfg(test)]
mod tests;
