//! Turns a recorded trace plus its scenario into plot data.

use serde::Serialize;

use crate::env::{EnvConfig, TraceRecord};
use crate::error::{Error, Result};
use crate::world::{scan, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotData {
    pub scenario_seed: u64,
    pub boundary: Vec<[f64; 2]>,
    pub obstacles: Vec<[[f64; 2]; 4]>,
    /// Target pose `[x, y, heading]` and speed.
    pub target: [f64; 3],
    pub target_speed: f64,
    /// Sensor hits seen from the start state, in world coordinates.
    pub sensor_hits: Vec<[f64; 2]>,
    pub path: Vec<[f64; 2]>,
    pub time: Vec<f64>,
    pub speed: Vec<f64>,
    pub steer: Vec<f64>,
    /// Speed and steering divided by their largest magnitude in the trace.
    pub speed_normalized: Vec<f64>,
    pub steer_normalized: Vec<f64>,
    pub termination: String,
}

fn normalized(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().map(|x| x.abs()).fold(0.0, f64::max);
    xs.iter().map(|x| if m > 0.0 { x / m } else { 0.0 }).collect()
}

pub fn replay(trace: &[TraceRecord], scenario: &Scenario, env: &EnvConfig) -> Result<PlotData> {
    let last = trace.last().ok_or_else(|| Error::TraceCorrupt("trace is empty".into()))?;
    if let Some(r) = trace.iter().find(|r| r.scenario_seed != scenario.seed) {
        return Err(Error::TraceCorrupt(format!(
            "trace belongs to scenario {} but scenario {} was given",
            r.scenario_seed, scenario.seed
        )));
    }
    let hits = scan(&scenario.start, scenario, env.sensor.rays, env.sensor.max_range);
    let speed: Vec<f64> = trace.iter().map(|r| r.v).collect();
    let steer: Vec<f64> = trace.iter().map(|r| r.steer).collect();
    Ok(PlotData {
        scenario_seed: scenario.seed,
        boundary: scenario.boundary.vertices.iter().map(|p| [p.x, p.y]).collect(),
        obstacles: scenario.obstacles.iter().map(|o| o.corners().map(|p| [p.x, p.y])).collect(),
        target: [scenario.target.x, scenario.target.y, scenario.target.heading],
        target_speed: scenario.target.speed,
        sensor_hits: hits.world_hits(&scenario.start).map(|p| [p.x, p.y]).collect(),
        path: trace.iter().map(|r| [r.x, r.y]).collect(),
        time: trace.iter().map(|r| r.t as f64 * env.dt).collect(),
        speed_normalized: normalized(&speed),
        steer_normalized: normalized(&steer),
        speed,
        steer,
        termination: last.termination.clone(),
    })
}
