//! The episodic control MDP: observation assembly, DRIVER/STOPPER rewards
//! for both training phases, termination rules and the step function.

mod trace;

pub use trace::{read_trace, write_trace, TraceRecord};

use crate::dynamics::{self, Action, VehicleGeometry, VehicleState, STEER_MAX, V_MAX};
use crate::geometry::{wrap_angle, Vec2};
use crate::world::{self, GridSpec, PerceptionGrid, Scenario, SensorConfig};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const STATE_DIM: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Driver,
    Stopper,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Driver => "driver",
            Task::Stopper => "stopper",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    One,
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Phase> {
        match n {
            1 => Some(Phase::One),
            2 => Some(Phase::Two),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    Running,
    Success,
    Collision,
    Timeout,
    Overspeed,
}

impl Termination {
    pub fn is_terminal(self) -> bool {
        self != Termination::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Running => "running",
            Termination::Success => "success",
            Termination::Collision => "collision",
            Termination::Timeout => "timeout",
            Termination::Overspeed => "overspeed",
        }
    }

    pub fn parse(s: &str) -> Option<Termination> {
        Some(match s {
            "running" => Termination::Running,
            "success" => Termination::Success,
            "collision" => Termination::Collision,
            "timeout" => Termination::Timeout,
            "overspeed" => Termination::Overspeed,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub c_p: f64,
    pub c_v: f64,
    pub c_beta: f64,
    pub r0: f64,
    pub task: Task,
    pub phase: Phase,
    /// Position tolerance (m).
    pub d_tol: f64,
    /// Orientation tolerance for the half bonus (rad).
    pub heading_tol: f64,
    /// STOPPER speed tolerance (m/s).
    pub v_tol: f64,
    /// Subtracted on collision or overspeed.
    pub failure_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            c_p: 0.1,
            c_v: 0.5,
            c_beta: 0.5,
            r0: 50.0,
            task: Task::Driver,
            phase: Phase::One,
            d_tol: 0.5,
            heading_tol: 0.2,
            v_tol: 0.1,
            failure_penalty: 25.0,
        }
    }
}

/// Everything the environment needs besides the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub reward: RewardConfig,
    pub grid: GridSpec,
    pub sensor: SensorConfig,
    pub vehicle: VehicleGeometry,
    /// Control interval (s).
    pub dt: f64,
    /// Maximum episode length in steps.
    pub horizon: usize,
    /// Relative position is clipped to ±this before scaling (m).
    pub d_max: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            grid: GridSpec::default(),
            sensor: SensorConfig::default(),
            vehicle: VehicleGeometry::default(),
            dt: 0.1,
            horizon: 250,
            d_max: 50.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        let r = &self.reward;
        if !(r.c_p > 0.0 && r.c_v > 0.0 && r.c_beta > 0.0 && r.r0 > 0.0) {
            return bad("reward coefficients must be positive");
        }
        if !(r.d_tol > 0.0 && r.heading_tol > 0.0 && r.v_tol > 0.0) {
            return bad("reward tolerances must be positive");
        }
        if !(r.failure_penalty >= 0.0) {
            return bad("reward.failure_penalty must be non-negative");
        }
        let g = &self.grid;
        if g.rows == 0 || g.cols == 0 || g.rows % 4 != 0 || g.cols % 4 != 0 {
            return bad("grid sides must be positive multiples of 4");
        }
        if g.anchor_row >= g.rows || g.anchor_col >= g.cols || !(g.cell_size > 0.0) {
            return bad("grid anchor must lie inside the grid and cells must have positive size");
        }
        if self.sensor.rays == 0 || !(self.sensor.max_range > 0.0) || !(self.sensor.noise_sigma >= 0.0) {
            return bad("sensor needs rays, a positive range and non-negative noise");
        }
        if !self.vehicle.is_valid() {
            return bad("vehicle geometry is inconsistent");
        }
        if !(self.dt > 0.0) || self.horizon == 0 || !(self.d_max > 0.0) {
            return bad("dt, horizon and d_max must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// (xʳ, yʳ, v, vᵗ, β, cos ρʳ, sin ρʳ), each scaled to [−1, 1].
    pub state: [f64; STATE_DIM],
    pub grid: PerceptionGrid,
}

impl Observation {
    pub fn target_speed(&self) -> f64 {
        self.state[3] * V_MAX
    }

    pub fn steer(&self) -> f64 {
        self.state[4] * STEER_MAX
    }
}

/// Target position in the vehicle frame and relative heading.
pub fn relative_target(state: &VehicleState, scenario: &Scenario) -> (Vec2, f64) {
    let rel = scenario.target.position() - state.position();
    (rel.rotate(-state.heading), wrap_angle(scenario.target.heading - state.heading))
}

/// Noise-free observation.
pub fn observe(state: &VehicleState, scenario: &Scenario, cfg: &EnvConfig) -> Observation {
    let scan = world::scan(state, scenario, cfg.sensor.rays, cfg.sensor.max_range);
    assemble(state, scenario, cfg, &scan)
}

/// Observation with sensor range noise drawn from `rng` when configured.
pub fn observe_noisy<R: rand::Rng>(
    state: &VehicleState,
    scenario: &Scenario,
    cfg: &EnvConfig,
    rng: &mut R,
) -> Observation {
    let mut scan = world::scan(state, scenario, cfg.sensor.rays, cfg.sensor.max_range);
    world::add_noise(&mut scan, cfg.sensor.noise_sigma, rng);
    assemble(state, scenario, cfg, &scan)
}

fn assemble(state: &VehicleState, scenario: &Scenario, cfg: &EnvConfig, scan: &world::SensorScan) -> Observation {
    let (rel, dh) = relative_target(state, scenario);
    let dm = cfg.d_max;
    let s = [
        rel.x.clamp(-dm, dm) / dm,
        rel.y.clamp(-dm, dm) / dm,
        (state.v / V_MAX).clamp(0.0, 1.0),
        (scenario.target.speed / V_MAX).clamp(0.0, 1.0),
        (state.steer / STEER_MAX).clamp(-1.0, 1.0),
        dh.cos(),
        dh.sin(),
    ];
    Observation { state: s, grid: world::render_grid(state, scenario, scan, &cfg.grid) }
}

/// Squared proximity in [0, 1]: 1 at the target, 0 at or beyond `d_norm`.
pub fn proximity(distance: f64, d_norm: f64) -> f64 {
    let r = distance / d_norm.max(1e-6);
    (1.0 - r * r).max(0.0)
}

pub fn speed_proximity(v: f64, target_v: f64) -> f64 {
    let r = (v - target_v) / V_MAX;
    1.0 - r * r
}

pub fn steer_proximity(steer: f64) -> f64 {
    let r = steer / STEER_MAX;
    1.0 - r * r
}

/// Per-step reward for the transition `prev → next`.
///
/// DRIVER: `c_p·Δp̄ + [r₀ + ½r₀·heading ok]` on success, plus
/// `c_v·Δv̄ + c_β·Δβ̄` in phase 2.
///
/// STOPPER: the speed term is the change of `Δp̄·Δv̄` between `prev` and
/// `next`, weighted `2c_v` in phase 1 and `c_v` in phase 2, so only progress
/// towards a slow arrival is paid and standing still earns nothing. Phase 2
/// adds `c_β·Δβ̄`. Bonuses are paid on success (position and v ≤ v_tol).
///
/// Collision and overspeed subtract `failure_penalty`; a failing STOPPER step
/// drops the speed-shaping difference.
pub fn reward(
    prev: &VehicleState,
    next: &VehicleState,
    _action: &Action,
    scenario: &Scenario,
    cfg: &RewardConfig,
    term: Termination,
) -> f64 {
    let d_norm = scenario.initial_distance();
    let target = scenario.target;
    let dist = |s: &VehicleState| (target.position() - s.position()).norm();
    let p_next = proximity(dist(next), d_norm);
    let mut r = cfg.c_p * p_next;

    match cfg.task {
        Task::Driver => {
            if cfg.phase == Phase::Two {
                r += cfg.c_v * speed_proximity(next.v, target.speed) + cfg.c_beta * steer_proximity(next.steer);
            }
        }
        Task::Stopper => {
            let weight = match cfg.phase {
                Phase::One => 2.0 * cfg.c_v,
                Phase::Two => cfg.c_v,
            };
            let failed = matches!(term, Termination::Collision | Termination::Overspeed);
            if !failed {
                let p_prev = proximity(dist(prev), d_norm);
                let psi_next = p_next * speed_proximity(next.v, target.speed);
                let psi_prev = p_prev * speed_proximity(prev.v, target.speed);
                r += weight * (psi_next - psi_prev);
            }
            if cfg.phase == Phase::Two {
                r += cfg.c_beta * steer_proximity(next.steer);
            }
        }
    }

    match term {
        Termination::Success => {
            r += cfg.r0;
            if wrap_angle(target.heading - next.heading).abs() <= cfg.heading_tol {
                r += 0.5 * cfg.r0;
            }
        }
        Termination::Collision | Termination::Overspeed => r -= cfg.failure_penalty,
        Termination::Running | Termination::Timeout => {}
    }
    r
}

/// Classifies the state reached after `steps` control steps. Priority:
/// collision, overspeed, success, timeout.
pub fn check_termination(
    state: &VehicleState,
    raw_speed: f64,
    steps: usize,
    scenario: &Scenario,
    cfg: &EnvConfig,
) -> Termination {
    if world::collides(state, &cfg.vehicle, scenario) {
        return Termination::Collision;
    }
    if raw_speed > V_MAX {
        return Termination::Overspeed;
    }
    let r = &cfg.reward;
    let at_target = (scenario.target.position() - state.position()).norm() <= r.d_tol;
    let stopped = match r.task {
        Task::Driver => true,
        Task::Stopper => state.v <= r.v_tol,
    };
    if at_target && stopped {
        return Termination::Success;
    }
    if steps >= cfg.horizon {
        return Termination::Timeout;
    }
    Termination::Running
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: VehicleState,
    pub observation: Observation,
    pub reward: f64,
    pub termination: Termination,
}

/// One control step from `state` at step index `t` (steps already taken).
pub fn env_step(state: &VehicleState, action: &Action, t: usize, scenario: &Scenario, cfg: &EnvConfig) -> StepResult {
    let (next, termination, reward) = transition(state, action, t, scenario, cfg);
    StepResult { state: next, observation: observe(&next, scenario, cfg), reward, termination }
}

fn transition(
    state: &VehicleState,
    action: &Action,
    t: usize,
    scenario: &Scenario,
    cfg: &EnvConfig,
) -> (VehicleState, Termination, f64) {
    let action = action.clamped();
    let out = dynamics::integrate(state, &action, cfg.vehicle.wheelbase, cfg.dt);
    let term = check_termination(&out.state, out.raw_speed, t + 1, scenario, cfg);
    let r = reward(state, &out.state, &action, scenario, &cfg.reward, term);
    (out.state, term, r)
}

/// Switches phase 1 → 2 once the mean success rate over the trailing
/// window reaches the threshold; never switches back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSchedule {
    pub window: usize,
    pub threshold: f64,
}

impl Default for PhaseSchedule {
    fn default() -> Self {
        Self { window: 20, threshold: 0.7 }
    }
}

impl PhaseSchedule {
    pub fn advance(&self, phase: Phase, success_history: &[f64]) -> Phase {
        if phase == Phase::Two || self.window == 0 || success_history.len() < self.window {
            return phase;
        }
        let tail = &success_history[success_history.len() - self.window..];
        let mean = tail.iter().sum::<f64>() / self.window as f64;
        if mean >= self.threshold {
            Phase::Two
        } else {
            phase
        }
    }
}

/// A running episode: scenario plus mutable vehicle state and step count.
#[derive(Debug, Clone)]
pub struct Episode {
    pub scenario: Scenario,
    pub state: VehicleState,
    pub t: usize,
    pub total_reward: f64,
    pub termination: Termination,
}

impl Episode {
    pub fn new(scenario: Scenario) -> Self {
        let state = scenario.start;
        Self { scenario, state, t: 0, total_reward: 0.0, termination: Termination::Running }
    }

    pub fn observe(&self, cfg: &EnvConfig) -> Observation {
        observe(&self.state, &self.scenario, cfg)
    }

    /// Applies one action; returns reward and termination. The next
    /// observation is produced separately so callers can batch it.
    pub fn advance(&mut self, action: &Action, cfg: &EnvConfig) -> (f64, Termination) {
        debug_assert!(!self.termination.is_terminal(), "episode already finished");
        let (next, term, r) = transition(&self.state, action, self.t, &self.scenario, cfg);
        self.state = next;
        self.t += 1;
        self.total_reward += r;
        self.termination = term;
        (r, term)
    }
}
