//! Scenario generation, collision geometry, simulated range sensing and
//! perception-grid rendering.

mod file;
mod grid;
mod scenario;
mod sensor;

pub use file::{load_scenarios, save_scenarios, SCENARIO_FORMAT};
pub use grid::{render_grid, GridSpec, PerceptionGrid};
pub use scenario::{generate_scenario, Layout, Scenario, ScenarioConfig, TargetState};
pub use sensor::{add_noise, scan, RayReading, SensorConfig, SensorScan};

use crate::dynamics::{footprint, VehicleGeometry, VehicleState};
use crate::geometry::{rect_inside_polygon, rects_overlap};

/// True when the body rectangle overlaps an obstacle or is not contained in
/// the drivable area. Tangent contact is not a collision.
pub fn collides(state: &VehicleState, geom: &VehicleGeometry, scenario: &Scenario) -> bool {
    let fp = footprint(state, geom);
    scenario.obstacles.iter().any(|o| rects_overlap(&fp, o)) || !rect_inside_polygon(&fp, &scenario.boundary)
}

#[cfg(test)]
mod tests;
