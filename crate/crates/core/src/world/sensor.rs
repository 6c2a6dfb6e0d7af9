//! First-hit ray casting against obstacle and boundary edges.

use super::scenario::Scenario;
use crate::dynamics::VehicleState;
use crate::geometry::{ray_segment, Vec2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub rays: usize,
    pub max_range: f64,
    /// Standard deviation of additive range noise; 0 disables noise.
    pub noise_sigma: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { rays: 360, max_range: 20.0, noise_sigma: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayReading {
    /// Relative to the vehicle heading.
    pub bearing: f64,
    pub distance: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorScan {
    pub readings: Vec<RayReading>,
    pub max_range: f64,
}

impl SensorScan {
    /// Hit points in the vehicle frame (x forward, y left).
    pub fn local_hits(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.readings
            .iter()
            .filter(|r| r.hit)
            .map(|r| Vec2::new(r.distance * r.bearing.cos(), r.distance * r.bearing.sin()))
    }

    /// Hit points in the inertial frame.
    pub fn world_hits<'a>(&'a self, state: &'a VehicleState) -> impl Iterator<Item = Vec2> + 'a {
        self.local_hits().map(move |p| p.rotate(state.heading) + state.position())
    }
}

/// Casts `rays` equally spaced bearings over [−π, π) from the rear-axle center.
pub fn scan(state: &VehicleState, scenario: &Scenario, rays: usize, max_range: f64) -> SensorScan {
    let origin = state.position();
    let mut edges: Vec<(Vec2, Vec2)> = scenario.boundary.edges().collect();
    for o in &scenario.obstacles {
        let c = o.corners();
        edges.extend((0..4).map(|i| (c[i], c[(i + 1) % 4])));
    }
    let readings = (0..rays)
        .map(|k| {
            let bearing = -PI + 2.0 * PI * k as f64 / rays as f64;
            let (s, c) = (state.heading + bearing).sin_cos();
            let dir = Vec2::new(c, s);
            let nearest = edges
                .iter()
                .filter_map(|&(a, b)| ray_segment(origin, dir, a, b))
                .filter(|&t| t > 0.0)
                .fold(f64::INFINITY, f64::min);
            if nearest <= max_range {
                RayReading { bearing, distance: nearest, hit: true }
            } else {
                RayReading { bearing, distance: max_range, hit: false }
            }
        })
        .collect();
    SensorScan { readings, max_range }
}

/// Adds Gaussian range noise to every hit, keeping distances in (0, max_range].
pub fn add_noise<R: Rng>(scan: &mut SensorScan, sigma: f64, rng: &mut R) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    for r in scan.readings.iter_mut().filter(|r| r.hit) {
        r.distance = (r.distance + normal.sample(rng)).clamp(1e-6, scan.max_range);
    }
}
