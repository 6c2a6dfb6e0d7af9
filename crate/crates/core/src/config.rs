//! Run configuration: one TOML file describing a training or evaluation run.
//!
//! Every key is optional and defaults to the standard hyperparameters.
//! Unknown keys are rejected. The task and obstacle regime are set once at
//! the top level and propagated to the reward and scenario sections, so
//! those sections may not repeat them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleGeometry;
use crate::env::{EnvConfig, PhaseSchedule, RewardConfig, Task};
use crate::error::{Error, Result};
use crate::ppo::{TrainConfig, TrainSetup};
use crate::world::{GridSpec, ScenarioConfig, SensorConfig};

/// Type A trains with obstacle vehicles, type B without.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Regime {
    #[default]
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Control interval (s).
    pub dt: f64,
    /// Steps per episode (T).
    pub horizon: usize,
    /// Clip range for the relative target position (m).
    pub d_max: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self { dt: e.dt, horizon: e.horizon, d_max: e.d_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub tasks: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { tasks: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub regime: Regime,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub train: TrainConfig,
    pub reward: RewardConfig,
    pub phases: PhaseSchedule,
    pub episode: EpisodeConfig,
    pub grid: GridSpec,
    pub sensor: SensorConfig,
    pub vehicle: VehicleGeometry,
    pub scenario: ScenarioConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Driver,
            regime: Regime::A,
            seed: 0,
            workers: 1,
            out: PathBuf::from("runs/default"),
            train: TrainConfig::default(),
            reward: RewardConfig::default(),
            phases: PhaseSchedule::default(),
            episode: EpisodeConfig::default(),
            grid: GridSpec::default(),
            sensor: SensorConfig::default(),
            vehicle: VehicleGeometry::default(),
            scenario: ScenarioConfig::default(),
            eval: EvalConfig::default(),
        }
        .propagated()
    }
}

/// Keys owned by the top level that nested sections must not repeat.
const OWNED: &[(&str, &str, &str)] = &[
    ("reward", "task", "task"),
    ("scenario", "task", "task"),
    ("scenario", "obstacles", "regime"),
    ("scenario", "vehicle", "[vehicle]"),
];

impl RunConfig {
    /// Small open-lot setup without obstacles, sized for a desktop CPU.
    pub fn toy(task: Task) -> Self {
        let mut c = Self { task, regime: Regime::B, ..Self::default() };
        c.scenario = ScenarioConfig::open_lot(task);
        c.train.rollout = 4096;
        c.train.minibatch = 256;
        c.train.steps = 16;
        c.train.max_epochs = 150;
        c.propagated()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        for (section, key, owner) in OWNED {
            if raw.get(*section).and_then(|s| s.as_table()).is_some_and(|t| t.contains_key(*key)) {
                return Err(Error::ConfigInvalid(format!("{section}.{key} is set through `{owner}`")));
            }
        }
        let cfg: RunConfig = raw.try_into().map_err(|e: toml::de::Error| Error::ConfigInvalid(e.to_string()))?;
        let cfg = cfg.propagated();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        let mut raw = toml::Table::try_from(self).expect("run config serializes");
        for (section, key, _) in OWNED {
            if let Some(t) = raw.get_mut(*section).and_then(|s| s.as_table_mut()) {
                t.remove(*key);
            }
        }
        toml::to_string(&raw).expect("run config serializes")
    }

    /// Copies top-level task, regime and vehicle into the nested sections.
    pub fn propagated(mut self) -> Self {
        self.reward.task = self.task;
        self.scenario.task = self.task;
        self.scenario.obstacles = self.regime == Regime::A;
        self.scenario.vehicle = self.vehicle;
        self
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig {
            reward: self.reward,
            grid: self.grid,
            sensor: self.sensor,
            vehicle: self.vehicle,
            dt: self.episode.dt,
            horizon: self.episode.horizon,
            d_max: self.episode.d_max,
        }
    }

    pub fn train_setup(&self) -> TrainSetup {
        TrainSetup {
            train: self.train,
            env: self.env(),
            scenarios: self.scenario.clone(),
            phases: self.phases,
            seed: self.seed,
            workers: self.workers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_setup().validate()?;
        if self.eval.tasks == 0 {
            return Err(Error::ConfigInvalid("eval.tasks must be at least 1".into()));
        }
        Ok(())
    }
}
