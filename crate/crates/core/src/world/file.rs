//! Scenario files.
//!
//! A scenario is stored as a JSON object with exactly these fields:
//!
//! ```text
//! format     "autopark-scenario/1"
//! seed       u64, the seed the scenario was generated from
//! boundary   [[x, y], ...]   drivable-area polygon, metres, closing edge implicit
//! obstacles  [{"center": [x, y], "heading": rad, "length": m, "width": m}, ...]
//! start      [x, y, v, heading, steer]
//! target     [x, y, heading, speed]
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is exact.

use super::scenario::{Scenario, TargetState};
use crate::dynamics::VehicleState;
use crate::error::{Error, Result};
use crate::geometry::{OrientedRect, Polygon, Vec2};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCENARIO_FORMAT: &str = "autopark-scenario/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleRecord {
    center: [f64; 2],
    heading: f64,
    length: f64,
    width: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    format: String,
    seed: u64,
    boundary: Vec<[f64; 2]>,
    obstacles: Vec<ObstacleRecord>,
    start: [f64; 5],
    target: [f64; 4],
}

impl From<&Scenario> for ScenarioRecord {
    fn from(s: &Scenario) -> Self {
        Self {
            format: SCENARIO_FORMAT.to_string(),
            seed: s.seed,
            boundary: s.boundary.vertices.iter().map(|v| [v.x, v.y]).collect(),
            obstacles: s
                .obstacles
                .iter()
                .map(|o| ObstacleRecord {
                    center: [o.center.x, o.center.y],
                    heading: o.heading,
                    length: o.length,
                    width: o.width,
                })
                .collect(),
            start: s.start.to_array(),
            target: [s.target.x, s.target.y, s.target.heading, s.target.speed],
        }
    }
}

impl TryFrom<ScenarioRecord> for Scenario {
    type Error = Error;

    fn try_from(r: ScenarioRecord) -> Result<Self> {
        if r.format != SCENARIO_FORMAT {
            return Err(Error::ScenarioInvalid(format!("unsupported format tag {:?}", r.format)));
        }
        if r.boundary.len() < 3 {
            return Err(Error::ScenarioInvalid("boundary needs at least 3 vertices".into()));
        }
        Ok(Scenario {
            boundary: Polygon::new(r.boundary.iter().map(|p| Vec2::new(p[0], p[1])).collect()),
            obstacles: r
                .obstacles
                .iter()
                .map(|o| OrientedRect {
                    center: Vec2::new(o.center[0], o.center[1]),
                    heading: o.heading,
                    length: o.length,
                    width: o.width,
                })
                .collect(),
            start: VehicleState::from_array(r.start),
            target: TargetState { x: r.target[0], y: r.target[1], heading: r.target[2], speed: r.target[3] },
            seed: r.seed,
        })
    }
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioRecord::from(self)).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let rec: ScenarioRecord =
            serde_json::from_str(text).map_err(|e| Error::ScenarioInvalid(e.to_string()))?;
        Scenario::try_from(rec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Writes a list of scenarios as a JSON array of records.
pub fn save_scenarios(path: &Path, scenarios: &[Scenario]) -> Result<()> {
    let recs: Vec<ScenarioRecord> = scenarios.iter().map(ScenarioRecord::from).collect();
    std::fs::write(path, serde_json::to_string_pretty(&recs)?)?;
    Ok(())
}

pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let recs: Vec<ScenarioRecord> = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::ScenarioInvalid(e.to_string()))?;
    recs.into_iter().map(Scenario::try_from).collect()
}
