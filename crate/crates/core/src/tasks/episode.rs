use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{action_twist, goal_distance, observe, reset, success, TaskError, TaskSpec};
use crate::rng::Rng;
use crate::world::{step, WorldConfig, WorldError, WorldState};

/// One running episode of a task for a fixed `(d, h)`.
///
/// Success is latched: once the predicate holds the episode counts as a
/// success and keeps running until the step limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub d: Vec<f64>,
    pub h: usize,
    pub state: WorldState,
    pub world: WorldConfig,
    pub t: usize,
    pub succeeded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Decrease of the object-to-target distance over the step.
    pub progress: f64,
    /// The success predicate held for the first time on this step.
    pub first_success: bool,
    /// The step limit was reached.
    pub done: bool,
}

impl Episode {
    pub fn start(spec: &TaskSpec, d: &[f64], h: usize, sigma: f64, rng: &mut Rng) -> Result<Self, TaskError> {
        let state = reset(spec, d, h, rng)?;
        let world = WorldConfig {
            disturbance_sigma: sigma,
            ..spec.world.clone()
        };
        Ok(Self {
            d: d.to_vec(),
            h,
            state,
            world,
            t: 0,
            succeeded: false,
        })
    }

    pub fn observe(&self, spec: &TaskSpec) -> Vec<f64> {
        observe(spec, &self.d, self.h, &self.state)
    }

    /// Applies a normalized action for one control step.
    pub fn step(&mut self, spec: &TaskSpec, action: &[f64], rng: &mut Rng) -> Result<StepOutcome, WorldError> {
        let before = goal_distance(spec, &self.state);
        let twist = action_twist(spec, &self.state, action);
        self.state = step(&self.world, &self.state, twist, rng)?;
        self.t += 1;
        let after = goal_distance(spec, &self.state);
        let now = success(spec, &self.state);
        let first_success = now && !self.succeeded;
        self.succeeded |= now;
        Ok(StepOutcome {
            progress: before - after,
            first_success,
            done: self.t >= spec.episode_length,
        })
    }
}
