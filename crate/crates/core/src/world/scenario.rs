//! Random control tasks: drivable-area polygon, parked-car obstacles, a
//! start state and a target state.

use crate::dynamics::{footprint, VehicleGeometry, VehicleState, STEER_MAX, V_MAX};
use crate::env::Task;
use crate::error::{Error, Result};
use crate::geometry::{rect_inside_polygon, rects_overlap, OrientedRect, Polygon, Vec2};
use crate::rng::seeded;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

const MAX_ATTEMPTS: usize = 100;
const CAR_LENGTH: f64 = 4.6;
const CAR_WIDTH: f64 = 1.9;
const BAY_WIDTH: f64 = 2.6;
const BAY_DEPTH: f64 = 5.5;
/// Free space kept around the target point.
const TARGET_CLEARANCE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl TargetState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub boundary: Polygon,
    pub obstacles: Vec<OrientedRect>,
    pub start: VehicleState,
    pub target: TargetState,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Rectangular lot; targets scattered ahead of the start pose.
    OpenLot,
    /// Corridor with one 90° turn and rows of parking bays.
    Corridor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub layout: Layout,
    pub task: Task,
    /// Corridor width range (m).
    pub lane_width: [f64; 2],
    /// Open-lot extent: (distance behind start, ahead of start, half width).
    pub lot_extent: [f64; 3],
    /// Type A (true) vs type B (false).
    pub obstacles: bool,
    pub obstacle_count: [usize; 2],
    /// Target path distance range (m).
    pub target_distance: [f64; 2],
    /// Largest target bearing off the start heading in the open lot (rad).
    pub target_bearing: f64,
    /// Target speed range for DRIVER tasks; STOPPER targets always have 0.
    pub target_speed: [f64; 2],
    /// Start heading is drawn from ±this value (rad).
    pub start_heading_jitter: f64,
    pub vehicle: VehicleGeometry,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            layout: Layout::Corridor,
            task: Task::Driver,
            lane_width: [6.0, 8.0],
            lot_extent: [10.0, 30.0, 20.0],
            obstacles: true,
            obstacle_count: [2, 8],
            target_distance: [8.0, 30.0],
            target_bearing: 0.6,
            target_speed: [1.0, 3.0],
            start_heading_jitter: 0.2,
            vehicle: VehicleGeometry::default(),
        }
    }
}

impl ScenarioConfig {
    /// Obstacle-free open lot with nearby targets.
    pub fn open_lot(task: Task) -> Self {
        Self {
            layout: Layout::OpenLot,
            task,
            obstacles: false,
            target_distance: [5.0, 15.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if !(self.lane_width[0] > 2.0 * CAR_WIDTH && self.lane_width[0] <= self.lane_width[1]) {
            return bad("scenario.lane_width must be an ordered range above two car widths");
        }
        if !(self.target_distance[0] > 0.0 && self.target_distance[0] <= self.target_distance[1]) {
            return bad("scenario.target_distance must be a positive ordered range");
        }
        if !(0.0..=V_MAX).contains(&self.target_speed[0])
            || !(self.target_speed[0]..=V_MAX).contains(&self.target_speed[1])
        {
            return bad("scenario.target_speed must lie within [0, 3.3]");
        }
        if self.obstacle_count[0] > self.obstacle_count[1] {
            return bad("scenario.obstacle_count must be ordered");
        }
        if self.lot_extent.iter().any(|&e| e <= 0.0) {
            return bad("scenario.lot_extent entries must be positive");
        }
        if !self.vehicle.is_valid() {
            return bad("vehicle geometry is inconsistent");
        }
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Draws a scenario from the start distribution. The same `(config, seed)`
/// always yields the same scenario.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    let mut rng = seeded(seed, 0x5C3A);
    for _ in 0..MAX_ATTEMPTS {
        let candidate = match config.layout {
            Layout::OpenLot => open_lot(config, &mut rng, seed),
            Layout::Corridor => corridor(config, &mut rng, seed),
        };
        if let Some(s) = candidate {
            if s.check_invariants(&config.vehicle).is_ok() {
                return Ok(s);
            }
        }
    }
    Err(Error::GenerationFailed { attempts: MAX_ATTEMPTS })
}

fn random_start<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> VehicleState {
    let j = config.start_heading_jitter;
    let heading = if j > 0.0 { rng.random_range(-j..j) } else { 0.0 };
    VehicleState::new(
        0.0,
        0.0,
        rng.random_range(0.0..=V_MAX),
        heading,
        rng.random_range(-STEER_MAX..=STEER_MAX),
    )
}

fn target_speed<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> f64 {
    match config.task {
        Task::Stopper => 0.0,
        Task::Driver => uniform(rng, config.target_speed),
    }
}

fn open_lot<R: Rng>(config: &ScenarioConfig, rng: &mut R, seed: u64) -> Option<Scenario> {
    let [back, ahead, half] = config.lot_extent;
    let boundary = Polygon::new(vec![
        Vec2::new(-back, -half),
        Vec2::new(ahead, -half),
        Vec2::new(ahead, half),
        Vec2::new(-back, half),
    ]);
    let start = random_start(config, rng);
    let dist = uniform(rng, config.target_distance);
    let b = config.target_bearing;
    let bearing = if b > 0.0 { rng.random_range(-b..b) } else { 0.0 };
    let dir = start.heading + bearing;
    let target = TargetState {
        x: dist * dir.cos(),
        y: dist * dir.sin(),
        // Heading at the end of the circular arc leaving the start tangentially.
        heading: crate::geometry::wrap_angle(start.heading + 2.0 * bearing),
        speed: target_speed(config, rng),
    };
    if boundary.distance_to_boundary(target.position()) < 2.0 * TARGET_CLEARANCE
        || !boundary.contains(target.position())
    {
        return None;
    }
    let mut obstacles = Vec::new();
    if config.obstacles {
        let count = rng.random_range(config.obstacle_count[0]..=config.obstacle_count[1]);
        let mut tries = 0;
        while obstacles.len() < count && tries < 20 * (count + 1) {
            tries += 1;
            let rect = OrientedRect {
                center: Vec2::new(
                    rng.random_range(-back + 3.0..ahead - 3.0),
                    rng.random_range(-half + 3.0..half - 3.0),
                ),
                heading: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
                length: CAR_LENGTH,
                width: CAR_WIDTH,
            };
            if obstacle_admissible(&rect, &obstacles, &start, &target, config, &boundary) {
                obstacles.push(rect);
            }
        }
        if obstacles.len() < config.obstacle_count[0] {
            return None;
        }
    }
    Some(Scenario { boundary, obstacles, start, target, seed })
}

fn obstacle_admissible(
    rect: &OrientedRect,
    placed: &[OrientedRect],
    start: &VehicleState,
    target: &TargetState,
    config: &ScenarioConfig,
    boundary: &Polygon,
) -> bool {
    let mut padded_start = footprint(start, &config.vehicle);
    padded_start.length += 2.0;
    padded_start.width += 2.0;
    let mut padded = *rect;
    padded.length += 2.0 * TARGET_CLEARANCE;
    padded.width += 2.0 * TARGET_CLEARANCE;
    rect_inside_polygon(rect, boundary)
        && !rects_overlap(rect, &padded_start)
        && !padded.contains_strict(target.position())
        && placed.iter().all(|o| !rects_overlap(rect, o))
}

fn corridor<R: Rng>(config: &ScenarioConfig, rng: &mut R, seed: u64) -> Option<Scenario> {
    let w = uniform(rng, config.lane_width);
    let hw = 0.5 * w;
    let behind = 8.0;
    let turn_outer = rng.random_range(14.0..30.0);
    let corner_center = turn_outer - hw;
    let leg = (config.target_distance[1] - corner_center).max(0.0) + 8.0 + hw;
    let left_turn = rng.random_bool(0.5);

    // Built for a left turn, mirrored afterwards for a right turn.
    let mut verts = vec![Vec2::new(-behind, -hw)];
    let mut bays: Vec<OrientedRect> = Vec::new();
    let (r0, r1) = (2.0, turn_outer - 1.0);
    if r1 - r0 >= BAY_WIDTH {
        verts.push(Vec2::new(r0, -hw));
        verts.push(Vec2::new(r0, -hw - BAY_DEPTH));
        verts.push(Vec2::new(r1, -hw - BAY_DEPTH));
        verts.push(Vec2::new(r1, -hw));
        bays.extend(bay_slots(r0, r1, -hw - 0.5 * BAY_DEPTH));
    }
    verts.push(Vec2::new(turn_outer, -hw));
    verts.push(Vec2::new(turn_outer, leg));
    verts.push(Vec2::new(turn_outer - w, leg));
    let (l0, l1) = (2.0, turn_outer - w - 0.5);
    if l1 - l0 >= BAY_WIDTH {
        verts.push(Vec2::new(turn_outer - w, hw));
        verts.push(Vec2::new(l1, hw));
        verts.push(Vec2::new(l1, hw + BAY_DEPTH));
        verts.push(Vec2::new(l0, hw + BAY_DEPTH));
        verts.push(Vec2::new(l0, hw));
        bays.extend(bay_slots(l0, l1, hw + 0.5 * BAY_DEPTH));
    } else {
        verts.push(Vec2::new(turn_outer - w, hw));
    }
    verts.push(Vec2::new(-behind, hw));

    let dist = uniform(rng, config.target_distance);
    let (tx, ty, th) = if dist <= corner_center {
        (dist, 0.0, 0.0)
    } else {
        (corner_center, dist - corner_center, FRAC_PI_2)
    };

    let mirror = |p: Vec2| if left_turn { p } else { Vec2::new(p.x, -p.y) };
    if !left_turn {
        verts.reverse();
    }
    let boundary = Polygon::new(verts.into_iter().map(mirror).collect());
    let sign = if left_turn { 1.0 } else { -1.0 };
    let target = TargetState {
        x: tx,
        y: sign * ty,
        heading: sign * th,
        speed: target_speed(config, rng),
    };
    let start = random_start(config, rng);

    let mut obstacles = Vec::new();
    if config.obstacles {
        let count = rng.random_range(config.obstacle_count[0]..=config.obstacle_count[1]);
        let mut candidates: Vec<OrientedRect> = bays
            .into_iter()
            .map(|mut b| {
                b.center = mirror(b.center);
                b.heading += rng.random_range(-0.08..0.08);
                b
            })
            .collect();
        // Cars parked along the corridor wall opposite the right-hand bays.
        for _ in 0..2 {
            let x = rng.random_range(4.0..(turn_outer - w).max(4.5));
            candidates.push(OrientedRect {
                center: mirror(Vec2::new(x, hw - 0.5 * CAR_WIDTH - 0.15)),
                heading: 0.0,
                length: CAR_LENGTH,
                width: CAR_WIDTH,
            });
        }
        // Partial Fisher–Yates so the chosen slots are a uniform subset.
        for i in 0..candidates.len() {
            let j = rng.random_range(i..candidates.len());
            candidates.swap(i, j);
        }
        for rect in candidates {
            if obstacles.len() >= count {
                break;
            }
            if obstacle_admissible(&rect, &obstacles, &start, &target, config, &boundary) {
                obstacles.push(rect);
            }
        }
        if obstacles.len() < config.obstacle_count[0] {
            return None;
        }
    }
    Some(Scenario { boundary, obstacles, start, target, seed })
}

fn bay_slots(x0: f64, x1: f64, y: f64) -> impl Iterator<Item = OrientedRect> {
    let n = ((x1 - x0) / BAY_WIDTH).floor() as usize;
    (0..n).map(move |i| OrientedRect {
        center: Vec2::new(x0 + (i as f64 + 0.5) * BAY_WIDTH, y),
        heading: FRAC_PI_2,
        length: CAR_LENGTH,
        width: CAR_WIDTH,
    })
}

impl Scenario {
    /// Verifies the structural invariants every generated or loaded
    /// scenario must satisfy.
    pub fn check_invariants(&self, geom: &VehicleGeometry) -> std::result::Result<(), String> {
        if !self.boundary.is_simple() {
            return Err("boundary polygon is not simple".into());
        }
        let fp = footprint(&self.start, geom);
        if !rect_inside_polygon(&fp, &self.boundary) {
            return Err("start footprint leaves the boundary".into());
        }
        if self.obstacles.iter().any(|o| rects_overlap(o, &fp)) {
            return Err("start footprint overlaps an obstacle".into());
        }
        if !(0.0..=V_MAX).contains(&self.start.v) || self.start.steer.abs() > STEER_MAX {
            return Err("start speed or steering out of bounds".into());
        }
        let t = self.target.position();
        if !self.boundary.contains(t) {
            return Err("target outside the boundary".into());
        }
        if self.obstacles.iter().any(|o| o.contains_strict(t)) {
            return Err("target inside an obstacle".into());
        }
        if !(0.0..=V_MAX).contains(&self.target.speed) {
            return Err("target speed out of bounds".into());
        }
        Ok(())
    }

    /// Straight-line start-to-target distance; normalizes the proximity reward.
    pub fn initial_distance(&self) -> f64 {
        (self.target.position() - self.start.position()).norm()
    }

    /// Rotates and translates the whole scene (boundary, obstacles, start,
    /// target) rigidly.
    pub fn transformed(&self, rotation: f64, translation: Vec2) -> Scenario {
        let move_pt = |p: Vec2| p.rotate(rotation) + translation;
        let sp = move_pt(self.start.position());
        let tp = move_pt(self.target.position());
        Scenario {
            boundary: self.boundary.transformed(rotation, translation),
            obstacles: self
                .obstacles
                .iter()
                .map(|o| OrientedRect {
                    center: move_pt(o.center),
                    heading: o.heading + rotation,
                    ..*o
                })
                .collect(),
            start: VehicleState {
                x: sp.x,
                y: sp.y,
                heading: crate::geometry::wrap_angle(self.start.heading + rotation),
                ..self.start
            },
            target: TargetState {
                x: tp.x,
                y: tp.y,
                heading: crate::geometry::wrap_angle(self.target.heading + rotation),
                ..self.target
            },
            seed: self.seed,
        }
    }
}
