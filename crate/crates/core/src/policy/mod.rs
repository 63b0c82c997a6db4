//! Universal policy optimization.
//!
//! A diagonal Gaussian policy over normalized actions, conditioned on the
//! morphology `d` and shape `h` through the observation, trained with PPO on
//! the reward `w_int·r_int + w_suc·r_suc + w_mee·mee_scale·MEE`.

mod net;
mod ppo;
mod train;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cage::{estimate_mee, CageError, GridResolution, MeeQuery, MeeStatus};
use crate::rng::Rng;
use crate::tasks::TaskError;
use crate::world::WorldError;

pub use net::{policy_forward, Mlp, PolicyParams};
pub use ppo::{ppo_loss, ppo_update, Adam, LossParts, UpdateStats};
pub use train::{
    evaluate, rollout, train_universal_policy, ActionMode, EvalOptions, EvalStats, LogRow, RolloutStats, Trainer,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("non-finite parameters or statistics")]
    NonFinite,
    #[error("invalid config: {0}")]
    Config(&'static str),
    #[error("training diverged: {0}")]
    Diverged(&'static str),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_int: f64,
    pub w_suc: f64,
    pub w_mee: f64,
    /// Multiplier on the raw escape energy (1/J).
    pub mee_scale: f64,
}

impl RewardWeights {
    /// Defaults `(1, 10, 1)` with the scale set from a task reference energy.
    pub fn for_reference(mee_reference: f64) -> Self {
        Self {
            w_int: 1.0,
            w_suc: 10.0,
            w_mee: 1.0,
            mee_scale: 1.0 / mee_reference,
        }
    }

    /// The same weights with the escape-energy term switched off.
    pub fn without_mee(self) -> Self {
        Self { w_mee: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let ws = [self.w_int, self.w_suc, self.w_mee];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(PolicyError::Config("reward weights must be finite and nonnegative"));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(PolicyError::Config("reward weights must not all be zero"));
        }
        if !(self.mee_scale.is_finite() && self.mee_scale > 0.0) {
            return Err(PolicyError::Config("mee_scale must be positive"));
        }
        Ok(())
    }
}

/// The reward-relevant facts about one control step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Transition {
    /// Decrease in object-to-target distance (m).
    pub progress: f64,
    /// Success was reached for the first time on this step.
    pub first_success: bool,
    /// Escape energy currently held by the tracker (J).
    pub mee: f64,
}

/// Largest value of the normalized escape-energy feature.
pub const MEE_FEATURE_CAP: f64 = 1.0;

/// `w_int·progress + w_suc·[first success] + w_mee·min(mee_scale·mee, 1)`.
pub fn reward(t: &Transition, w: &RewardWeights) -> f64 {
    let suc = if t.first_success { 1.0 } else { 0.0 };
    let mee = (w.mee_scale * t.mee).clamp(0.0, MEE_FEATURE_CAP);
    w.w_int * t.progress + w.w_suc * suc + w.w_mee * mee
}

/// Source of escape energies for reward shaping and scoring.
pub trait MeeProvider {
    fn mee(&mut self, query: &MeeQuery) -> Result<f64, CageError>;
}

impl<F: FnMut(&MeeQuery) -> Result<f64, CageError>> MeeProvider for F {
    fn mee(&mut self, query: &MeeQuery) -> Result<f64, CageError> {
        self(query)
    }
}

/// Sampling-based estimate with a fixed budget and its own stream.
///
/// A search that finds no escape within budget reports the query's cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerMee {
    pub budget: usize,
    pub rng: Rng,
}

impl MeeProvider for PlannerMee {
    fn mee(&mut self, query: &MeeQuery) -> Result<f64, CageError> {
        Ok(estimate_mee(query, self.budget, &mut self.rng)?.mee)
    }
}

/// Grid Dijkstra at a fixed resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMee(pub GridResolution);

impl MeeProvider for OracleMee {
    fn mee(&mut self, query: &MeeQuery) -> Result<f64, CageError> {
        let r = crate::cage::grid_mee_oracle(query, self.0)?;
        Ok(if r.status == MeeStatus::NotCaged { 0.0 } else { r.mee })
    }
}

/// Queries escape energy every `every` steps and holds the value in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeeTracker {
    pub every: usize,
    pub held: f64,
    pub failures: usize,
}

impl MeeTracker {
    pub fn new(every: usize) -> Self {
        Self {
            every: every.max(1),
            held: 0.0,
            failures: 0,
        }
    }

    /// Value for step `t` (0-based, counted from the episode start). A failed
    /// query holds 0 and logs a warning.
    pub fn at(&mut self, t: usize, query: impl FnOnce() -> Result<MeeQuery, CageError>, provider: &mut dyn MeeProvider) -> f64 {
        if t.is_multiple_of(self.every) {
            self.held = match query().and_then(|q| provider.mee(&q)) {
                Ok(v) if v.is_finite() && v >= 0.0 => v,
                Ok(_) => {
                    self.failures += 1;
                    log::warn!("escape-energy query returned a non-finite value; using 0");
                    0.0
                }
                Err(e) => {
                    self.failures += 1;
                    log::warn!("escape-energy query failed ({e}); using 0");
                    0.0
                }
            };
        }
        self.held
    }
}

/// Generalized advantage estimates and returns.
///
/// `dones[t]` marks that no value is bootstrapped after step `t`; callers fold
/// truncation bootstraps into the last reward of a segment.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, cont) = if dones[t] || t + 1 == n {
            (0.0, 0.0)
        } else {
            (values[t + 1], 1.0)
        };
        let delta = rewards[t] + gamma * next_value * cont - values[t];
        running = delta + gamma * lambda * cont * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PPOConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub steps_per_update: usize,
    pub total_steps: usize,
    pub mee_every_k_steps: usize,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Planner samples per escape-energy query.
    pub mee_budget: usize,
}

impl Default for PPOConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            learning_rate: 3e-4,
            epochs_per_update: 4,
            minibatch_size: 64,
            steps_per_update: 1024,
            total_steps: 100_000,
            mee_every_k_steps: 5,
            vf_coef: 0.5,
            ent_coef: 0.0,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            mee_budget: 200,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let checks = [
            (self.gamma > 0.0 && self.gamma < 1.0, "gamma must lie in (0, 1)"),
            (self.gae_lambda > 0.0 && self.gae_lambda <= 1.0, "gae_lambda must lie in (0, 1]"),
            (self.clip_epsilon > 0.0, "clip_epsilon must be positive"),
            (self.learning_rate > 0.0, "learning_rate must be positive"),
            (self.epochs_per_update >= 1, "epochs_per_update must be at least 1"),
            (self.minibatch_size >= 1, "minibatch_size must be at least 1"),
            (self.steps_per_update >= 1, "steps_per_update must be at least 1"),
            (self.mee_every_k_steps >= 1, "mee_every_k_steps must be at least 1"),
            (self.vf_coef >= 0.0 && self.ent_coef >= 0.0, "loss coefficients must be nonnegative"),
            (self.max_grad_norm > 0.0, "max_grad_norm must be positive"),
            (self.hidden.iter().all(|&h| h > 0), "hidden layers must be non-empty"),
            (self.init_log_std.is_finite(), "init_log_std must be finite"),
            (self.mee_budget >= 1, "mee_budget must be at least 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(PolicyError::Config(msg));
            }
        }
        Ok(())
    }
}

/// Transitions gathered for one PPO update.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Index one past the last step of every finished episode.
    pub episode_ends: Vec<usize>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, obs: Vec<f64>, action: Vec<f64>, log_prob: f64, reward: f64, value: f64, done: bool) {
        self.observations.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
        if done {
            self.episode_ends.push(self.rewards.len());
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let n = self.len();
        if [self.observations.len(), self.actions.len(), self.log_probs.len(), self.values.len(), self.dones.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(PolicyError::Shape("buffer arrays differ in length"));
        }
        if self.values.iter().chain(&self.rewards).chain(&self.log_probs).any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite);
        }
        Ok(())
    }
}

/// Log density of `a` under `N(mean, diag(exp(log_std))²)`.
pub fn gaussian_log_prob(a: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    a.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), l)| {
            let z = (a - m) / l.exp();
            -0.5 * z * z - l - HALF_LN_2PI
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    #[test]
    fn progress_only() {
        let w = RewardWeights { w_int: 1.0, w_suc: 0.0, w_mee: 0.0, mee_scale: 1.0 };
        let t = Transition { progress: 0.05, first_success: true, mee: 3.0 };
        assert!((reward(&t, &w) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn success_bonus_only_on_first_success() {
        let w = RewardWeights { w_int: 0.0, w_suc: 1.0, w_mee: 0.0, mee_scale: 1.0 };
        let mut t = Transition { progress: 0.3, first_success: false, mee: 1.0 };
        assert_eq!(reward(&t, &w), 0.0);
        t.first_success = true;
        assert_eq!(reward(&t, &w), 1.0);
    }

    #[test]
    fn caged_basket_reward_is_one() {
        let (m, g, z) = (0.5, 9.81, 0.2);
        let w = RewardWeights { w_int: 0.0, w_suc: 0.0, w_mee: 1.0, mee_scale: 1.0 / (m * g * z) };
        let t = Transition { progress: 0.0, first_success: false, mee: m * g * z };
        assert!((reward(&t, &w) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reward_is_linear_in_the_weights() {
        let mut rng = rng_from_seed(2);
        for _ in 0..200 {
            let w = RewardWeights {
                w_int: rng.random(),
                w_suc: rng.random::<f64>() * 10.0,
                w_mee: rng.random(),
                mee_scale: 0.5 + rng.random::<f64>() * 4.0,
            };
            let t = Transition {
                progress: rng.random_range(-0.1..0.1),
                first_success: rng.random(),
                mee: rng.random::<f64>() * 0.5,
            };
            let parts = [
                RewardWeights { w_suc: 0.0, w_mee: 0.0, ..w },
                RewardWeights { w_int: 0.0, w_mee: 0.0, ..w },
                RewardWeights { w_int: 0.0, w_suc: 0.0, ..w },
            ];
            let sum: f64 = parts.iter().map(|p| reward(&t, p)).sum();
            assert!((sum - reward(&t, &w)).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_validation() {
        let zero = RewardWeights { w_int: 0.0, w_suc: 0.0, w_mee: 0.0, mee_scale: 1.0 };
        assert!(zero.validate().is_err());
        assert!(RewardWeights::for_reference(0.2).validate().is_ok());
    }

    #[test]
    fn tracker_holds_between_queries_and_survives_failures() {
        let mut calls = 0;
        let mut provider = |_: &MeeQuery| -> Result<f64, CageError> {
            calls += 1;
            Ok(calls as f64)
        };
        let q = || -> Result<MeeQuery, CageError> {
            Ok(MeeQuery::new(
                crate::geom::ShapeGeom::circle(0.05).unwrap(),
                crate::geom::ConfigSE2::new(0.0, 0.0, 0.0),
                vec![],
                crate::cage::EnergyModel::Gravity { mass: 1.0, g: 9.81 },
            ))
        };
        let mut tr = MeeTracker::new(5);
        let got: Vec<f64> = (0..11).map(|t| tr.at(t, q, &mut provider)).collect();
        assert_eq!(got, vec![1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 3.0]);
        let mut failing = |_: &MeeQuery| -> Result<f64, CageError> { Err(CageError::InvalidQuery("x")) };
        assert_eq!(tr.at(15, q, &mut failing), 0.0);
        assert_eq!(tr.failures, 1);
    }

    fn direct_advantages(r: &[f64], v: &[f64], d: &[bool], g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let delta: Vec<f64> = (0..n)
            .map(|t| {
                let next = if d[t] || t + 1 == n { 0.0 } else { v[t + 1] };
                r[t] + g * next - v[t]
            })
            .collect();
        (0..n)
            .map(|t| {
                let mut s = 0.0;
                let mut w = 1.0;
                for k in t..n {
                    s += w * delta[k];
                    if d[k] {
                        break;
                    }
                    w *= g * l;
                }
                s
            })
            .collect()
    }

    #[test]
    fn gae_telescopes_to_monte_carlo() {
        let r = [1.0, -0.5, 2.0, 0.25];
        let v = [0.3, 0.1, -0.2, 0.7];
        let (adv, ret) = gae(&r, &v, &[false, false, false, true], 1.0, 1.0);
        for t in 0..4 {
            let tail: f64 = r[t..].iter().sum();
            assert!((adv[t] - (tail - v[t])).abs() < 1e-12);
            assert!((ret[t] - tail).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_of_zeros_is_zero() {
        let (adv, _) = gae(&[0.0; 6], &[0.0; 6], &[false; 6], 0.99, 0.95);
        assert!(adv.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn gae_matches_direct_summation() {
        let mut rng = rng_from_seed(9);
        for _ in 0..20 {
            let r: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d: Vec<bool> = (0..20).map(|_| rng.random::<f64>() < 0.15).collect();
            let (g, l) = (rng.random_range(0.8..0.999), rng.random_range(0.5..1.0));
            let (adv, ret) = gae(&r, &v, &d, g, l);
            let want = direct_advantages(&r, &v, &d, g, l);
            for t in 0..20 {
                assert!((adv[t] - want[t]).abs() < 1e-10);
                assert!((ret[t] - adv[t] - v[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_config_is_valid() {
        PPOConfig::default().validate().unwrap();
        let bad = PPOConfig { gamma: 1.0, ..PPOConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn log_prob_of_standard_normal_at_zero() {
        let lp = gaussian_log_prob(&[0.0], &[0.0], &[0.0]);
        assert!((lp + 0.5 * (2.0 * core::f64::consts::PI).ln()).abs() < 1e-15);
    }
}
