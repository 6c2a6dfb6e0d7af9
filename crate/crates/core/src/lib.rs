//! Simulator, trainer and evaluator for a reinforcement-learned vehicle
//! controller on parking-lot control tasks.
//!
//! The pieces, bottom up:
//!
//! - [`dynamics`]: kinematic single-track vehicle model.
//! - [`world`]: scenarios, collision checks, range sensing, perception grid.
//! - [`env`]: the episodic MDP (observations, rewards, termination).
//! - [`nn`]: actor/critic networks with hand-written backpropagation and Adam.
//! - [`ppo`]: rollouts, generalized advantage estimation, clipped PPO.
//! - [`eval`]: the deployed controller, batch evaluation and attention maps.

pub mod config;
pub mod dynamics;
pub mod env;
pub mod eval;
pub mod nn;
pub mod ppo;
pub mod error;
pub mod geometry;
pub mod rng;
pub mod world;

pub use error::{Error, Result};
