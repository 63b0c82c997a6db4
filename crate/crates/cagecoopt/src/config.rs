//! Experiment configuration (TOML, with an equivalent JSON form).

use std::fs;
use std::path::Path;

use cagecoopt_core::morph::{OptimizerConfig, OptimizerKind, ScoreConfig};
use cagecoopt_core::policy::{PPOConfig, RewardWeights};
use cagecoopt_core::rng::split_seed;
use cagecoopt_core::tasks::TaskSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{self, FormatError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown task {0:?} (see `cagecoopt tasks`)")]
    UnknownTask(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Everything a co-design run depends on. Missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Catalog task name; ignored when `task_spec` is given.
    pub task: String,
    /// Full task description overriding the catalog entry.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_spec: Option<TaskSpec>,
    pub seed: u64,
    pub n_seeds: usize,
    pub optimizer: OptimizerKind,
    /// Disturbance σ during policy training.
    pub train_sigma: f64,
    pub use_mee_reward: bool,
    pub ppo: PPOConfig,
    /// Reward weights; derived from the task's escape-energy reference when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardWeights>,
    /// `iterations` is N_bo (GA: generations).
    pub bo: OptimizerConfig,
    /// Score mixture weight, rollouts per evaluation and evaluation σ.
    pub score: ScoreConfig,
    /// Disturbance σ and rollouts per morphology for the Q statistic.
    pub q_sigma: f64,
    pub q_rollouts: usize,
    pub sweep_sigmas: Vec<f64>,
    pub sweep_rollouts: usize,
    /// Relative paths are resolved against the output root.
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: "vpush".into(),
            task_spec: None,
            seed: 0,
            n_seeds: 3,
            optimizer: OptimizerKind::Mtbo,
            train_sigma: 0.5,
            use_mee_reward: true,
            ppo: PPOConfig::default(),
            reward: None,
            bo: OptimizerConfig::default(),
            score: ScoreConfig::default(),
            q_sigma: 0.5,
            q_rollouts: 20,
            sweep_sigmas: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            sweep_rollouts: 50,
            output_dir: "runs".into(),
        }
    }
}

impl ExperimentConfig {
    /// Reads `.toml` or `.json` by extension.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            formats::read_json(path)?
        } else {
            let text = fs::read_to_string(path)
                .map_err(|err| FormatError::Io { path: path.to_path_buf(), err })?;
            toml::from_str(&text).map_err(|e| FormatError::Toml { path: path.to_path_buf(), msg: e.to_string() })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn to_json(&self) -> String {
        formats::to_json_string(self)
    }

    pub fn spec(&self) -> Result<TaskSpec, ConfigError> {
        match &self.task_spec {
            Some(s) => Ok(s.clone()),
            None => TaskSpec::by_name(&self.task).ok_or_else(|| ConfigError::UnknownTask(self.task.clone())),
        }
    }

    pub fn weights(&self, spec: &TaskSpec) -> RewardWeights {
        let w = self.reward.unwrap_or_else(|| RewardWeights::for_reference(spec.mee_reference));
        if self.use_mee_reward {
            w
        } else {
            w.without_mee()
        }
    }

    /// Seed of replica `i`; replicas draw from disjoint streams of the master seed.
    pub fn replica_seed(&self, i: usize) -> u64 {
        split_seed(self.seed, i as u64)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let spec = self.spec()?;
        spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ppo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.weights(&spec).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.bo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.n_seeds == 0 {
            return bad("n_seeds must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.score.w) || self.score.n_rollouts == 0 || self.score.mee_every_k_steps == 0 {
            return bad("score needs w in [0, 1], n_rollouts ≥ 1 and mee_every_k_steps ≥ 1".into());
        }
        if self.score.mee_budget == 0 {
            return bad("score.mee_budget must be at least 1".into());
        }
        let sigmas = [self.train_sigma, self.score.sigma, self.q_sigma];
        if sigmas.iter().chain(&self.sweep_sigmas).any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("disturbance σ values must be finite and non-negative".into());
        }
        if self.q_rollouts == 0 || self.sweep_rollouts == 0 {
            return bad("q_rollouts and sweep_rollouts must be at least 1".into());
        }
        Ok(())
    }

    /// Tiny budgets for smoke runs.
    pub fn smoke() -> Self {
        let mut c = Self {
            n_seeds: 2,
            q_rollouts: 4,
            sweep_sigmas: vec![0.0, 1.0],
            sweep_rollouts: 4,
            ..Self::default()
        };
        c.ppo.total_steps = 2048;
        c.ppo.steps_per_update = 512;
        c.ppo.hidden = vec![16, 16];
        c.ppo.mee_budget = 50;
        c.bo.iterations = 4;
        c.bo.gp_restarts = 1;
        c.bo.acq.candidate_count = 64;
        c.score.n_rollouts = 2;
        c.score.mee_budget = 50;
        c
    }
}
