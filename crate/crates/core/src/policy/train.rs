//! Rollout collection, training loop and evaluation.

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::net::{policy_forward, PolicyParams};
use super::ppo::{ppo_update, Adam};
use super::{
    gaussian_log_prob, reward, MeeProvider, MeeTracker, PPOConfig, PlannerMee, PolicyError, RewardWeights,
    RolloutBuffer, Transition,
};
use crate::rng::{split_seed, substream, Rng};
use crate::tasks::{mee_scene, Episode, TaskError, TaskSpec};

const RESAMPLE_ATTEMPTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Sample from the Gaussian.
    Stochastic,
    /// Use the mean action.
    Deterministic,
}

fn sample_action(mean: &[f64], std: &[f64], rng: &mut Rng) -> Vec<f64> {
    mean.iter()
        .zip(std)
        .map(|(m, s)| {
            let z: f64 = StandardNormal.sample(rng);
            m + s * z
        })
        .collect()
}

fn sample_design(spec: &TaskSpec, rng: &mut Rng) -> Result<(Vec<f64>, usize), TaskError> {
    let d = spec.sample_morphology(rng)?;
    let h = rng.random_range(0..spec.shapes.len());
    Ok((d, h))
}

/// Starts an episode for a random design; designs whose reset fails are
/// redrawn.
fn start_random(spec: &TaskSpec, sigma: f64, rng: &mut Rng) -> Result<Episode, PolicyError> {
    let mut last = None;
    for _ in 0..RESAMPLE_ATTEMPTS {
        let (d, h) = sample_design(spec, rng)?;
        match Episode::start(spec, &d, h, sigma, rng) {
            Ok(ep) => return Ok(ep),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or(TaskError::ResetFailed(RESAMPLE_ATTEMPTS)).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub success: bool,
    pub steps: usize,
    /// Escape energy averaged over the steps, held between queries (J).
    pub mean_mee: f64,
    pub total_reward: f64,
    /// The world produced a non-finite state; counted as a failure.
    pub diverged: bool,
}

/// One full episode from an already started [`Episode`].
///
/// `env_rng` drives disturbances and `act_rng` action noise, so two policies
/// evaluated from the same seeds face identical resets and forces.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    spec: &TaskSpec,
    params: &PolicyParams,
    mut ep: Episode,
    mode: ActionMode,
    weights: Option<&RewardWeights>,
    mee: Option<(&mut dyn MeeProvider, usize)>,
    env_rng: &mut Rng,
    act_rng: &mut Rng,
) -> Result<RolloutStats, PolicyError> {
    let (mut provider, every) = match mee {
        Some((p, k)) => (Some(p), k),
        None => (None, 1),
    };
    let mut tracker = MeeTracker::new(every);
    let mut stats = RolloutStats {
        success: false,
        steps: 0,
        mean_mee: 0.0,
        total_reward: 0.0,
        diverged: false,
    };
    let mut mee_sum = 0.0;
    while ep.t < spec.episode_length {
        let (mean, std, _) = policy_forward(params, &ep.observe(spec))?;
        let action = match mode {
            ActionMode::Stochastic => sample_action(&mean, &std, act_rng),
            ActionMode::Deterministic => mean,
        };
        let out = match ep.step(spec, &action, env_rng) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("rollout diverged ({e}); counted as failure");
                stats.diverged = true;
                stats.success = false;
                break;
            }
        };
        stats.steps += 1;
        let m = match provider.as_deref_mut() {
            Some(p) => tracker.at(ep.t - 1, || mee_scene(spec, &ep.state), p),
            None => 0.0,
        };
        mee_sum += m;
        if let Some(w) = weights {
            let t = Transition {
                progress: out.progress,
                first_success: out.first_success,
                mee: m,
            };
            stats.total_reward += reward(&t, w);
        }
        stats.success = ep.succeeded;
        if out.done {
            break;
        }
    }
    if stats.steps > 0 {
        stats.mean_mee = mee_sum / stats.steps as f64;
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean over episodes of the per-episode average escape energy (J).
    pub mean_mee: f64,
    pub steps: usize,
}

/// Evaluation settings for [`evaluate`].
pub struct EvalOptions<'a> {
    pub episodes: usize,
    pub sigma: f64,
    pub mode: ActionMode,
    /// Escape-energy provider and query period; `None` skips the queries.
    pub mee: Option<(&'a mut dyn MeeProvider, usize)>,
}

/// Runs `episodes` episodes; episode `i` draws everything from
/// `split_seed(seed, i)`. With `design = None` each episode draws its own
/// `(d, h)`; a design that cannot be reset counts as a failed episode.
pub fn evaluate(
    spec: &TaskSpec,
    params: &PolicyParams,
    design: Option<(&[f64], usize)>,
    opts: EvalOptions<'_>,
    seed: u64,
) -> Result<EvalStats, PolicyError> {
    let EvalOptions { episodes, sigma, mode, mut mee } = opts;
    let mut out = EvalStats {
        episodes,
        successes: 0,
        success_rate: 0.0,
        mean_mee: 0.0,
        steps: 0,
    };
    for i in 0..episodes {
        let s = split_seed(seed, i as u64);
        let mut env = substream(s, 0);
        let mut act = substream(s, 1);
        let ep = match design {
            Some((d, h)) => Episode::start(spec, d, h, sigma, &mut env),
            None => match start_random(spec, sigma, &mut env) {
                Ok(ep) => Ok(ep),
                Err(PolicyError::Task(e)) => Err(e),
                Err(e) => return Err(e),
            },
        };
        let ep = match ep {
            Ok(ep) => ep,
            Err(e) => {
                log::warn!("episode {i} could not be reset ({e}); counted as failure");
                continue;
            }
        };
        let m = mee.as_mut().map(|(p, k)| (&mut **p as &mut dyn MeeProvider, *k));
        let r = rollout(spec, params, ep, mode, None, m, &mut env, &mut act)?;
        out.successes += r.success as usize;
        out.mean_mee += r.mean_mee;
        out.steps += r.steps;
    }
    if episodes > 0 {
        out.success_rate = out.successes as f64 / episodes as f64;
        out.mean_mee /= episodes as f64;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    /// Environment steps taken so far.
    pub step: usize,
    /// Success fraction of the episodes finished during the update; repeats
    /// the previous value when none finished.
    pub mean_success: f64,
    pub mean_reward: f64,
    /// Mean tracked escape energy per step (J).
    pub mean_mee: f64,
}

/// Resumable PPO training state. Serializing it between updates and
/// continuing gives the same result as an uninterrupted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub spec: TaskSpec,
    pub cfg: PPOConfig,
    pub weights: RewardWeights,
    pub sigma: f64,
    pub params: PolicyParams,
    pub adam: Adam,
    pub env_rng: Rng,
    pub act_rng: Rng,
    pub update_rng: Rng,
    pub mee: PlannerMee,
    pub episode: Option<Episode>,
    pub tracker: MeeTracker,
    pub steps_done: usize,
    pub updates: usize,
    pub last_success: f64,
    pub log: Vec<LogRow>,
}

impl Trainer {
    pub fn new(spec: &TaskSpec, cfg: &PPOConfig, weights: &RewardWeights, sigma: f64, seed: u64) -> Result<Self, PolicyError> {
        cfg.validate()?;
        weights.validate()?;
        spec.validate()?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(PolicyError::Config("disturbance sigma must be nonnegative"));
        }
        let params = PolicyParams::new(
            spec.observation_dim(),
            &cfg.hidden,
            spec.action_dim(),
            cfg.init_log_std,
            &mut substream(seed, 0),
        );
        Ok(Self {
            spec: spec.clone(),
            cfg: cfg.clone(),
            weights: *weights,
            sigma,
            adam: Adam::new(params.param_count()),
            params,
            env_rng: substream(seed, 1),
            act_rng: substream(seed, 2),
            update_rng: substream(seed, 3),
            mee: PlannerMee {
                budget: cfg.mee_budget,
                rng: substream(seed, 4),
            },
            episode: None,
            tracker: MeeTracker::new(cfg.mee_every_k_steps),
            steps_done: 0,
            updates: 0,
            last_success: 0.0,
            log: Vec::new(),
        })
    }

    pub fn finished(&self) -> bool {
        self.steps_done >= self.cfg.total_steps
    }

    fn value(&self, obs: &[f64]) -> Result<f64, PolicyError> {
        Ok(policy_forward(&self.params, obs)?.2)
    }

    /// Collects one batch of transitions and applies one PPO update.
    pub fn update(&mut self) -> Result<LogRow, PolicyError> {
        let n = self.cfg.steps_per_update.min(self.cfg.total_steps - self.steps_done.min(self.cfg.total_steps));
        let spec = &self.spec;
        let mut buf = RolloutBuffer::default();
        let (mut finished, mut succeeded) = (0usize, 0usize);
        let mut mee_sum = 0.0;
        for _ in 0..n {
            let mut ep = match self.episode.take() {
                Some(ep) => ep,
                None => {
                    self.tracker = MeeTracker::new(self.cfg.mee_every_k_steps);
                    start_random(spec, self.sigma, &mut self.env_rng)?
                }
            };
            let obs = ep.observe(spec);
            let (mean, std, value) = policy_forward(&self.params, &obs)?;
            let action = sample_action(&mean, &std, &mut self.act_rng);
            let logp = gaussian_log_prob(&action, &mean, &self.params.log_std);
            let (r, done) = match ep.step(spec, &action, &mut self.env_rng) {
                Ok(out) => {
                    let m = self.tracker.at(ep.t - 1, || mee_scene(spec, &ep.state), &mut self.mee);
                    mee_sum += m;
                    let t = Transition {
                        progress: out.progress,
                        first_success: out.first_success,
                        mee: m,
                    };
                    let mut r = reward(&t, &self.weights);
                    if out.done {
                        // time limit: bootstrap from the final state
                        r += self.cfg.gamma * self.value(&ep.observe(spec))?;
                    }
                    (r, out.done)
                }
                Err(e) => {
                    log::warn!("training episode diverged ({e}); ended as failure");
                    ep.succeeded = false;
                    (0.0, true)
                }
            };
            buf.push(obs, action, logp, r, value, done);
            if done {
                finished += 1;
                succeeded += ep.succeeded as usize;
            } else {
                self.episode = Some(ep);
            }
        }
        if let (Some(ep), Some(last)) = (&self.episode, buf.len().checked_sub(1)) {
            buf.rewards[last] += self.cfg.gamma * self.value(&ep.observe(spec))?;
            buf.dones[last] = true;
        }
        let mean_reward = if n > 0 { buf.rewards.iter().sum::<f64>() / n as f64 } else { 0.0 };
        if n > 0 {
            let stats = ppo_update(&mut self.params, &buf, &self.cfg, &mut self.adam, &mut self.update_rng)?;
            if stats.aborted {
                log::warn!("update {} skipped after a non-finite loss", self.updates);
            }
        }
        self.steps_done += n;
        self.updates += 1;
        if finished > 0 {
            self.last_success = succeeded as f64 / finished as f64;
        }
        if !self.last_success.is_finite() {
            return Err(PolicyError::Diverged("success rate is not finite"));
        }
        let row = LogRow {
            step: self.steps_done,
            mean_success: self.last_success,
            mean_reward,
            mean_mee: if n > 0 { mee_sum / n as f64 } else { 0.0 },
        };
        self.log.push(row);
        Ok(row)
    }

    pub fn run(&mut self) -> Result<(), PolicyError> {
        while !self.finished() {
            self.update()?;
        }
        Ok(())
    }
}

/// Trains a universal policy from scratch. Every episode draws a random
/// morphology, shape and initial state.
pub fn train_universal_policy(
    spec: &TaskSpec,
    cfg: &PPOConfig,
    weights: &RewardWeights,
    sigma: f64,
    seed: u64,
) -> Result<(PolicyParams, Vec<LogRow>), PolicyError> {
    let mut t = Trainer::new(spec, cfg, weights, sigma, seed)?;
    t.run()?;
    Ok((t.params, t.log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn tiny_cfg(total: usize) -> PPOConfig {
        PPOConfig {
            total_steps: total,
            steps_per_update: 64,
            minibatch_size: 32,
            epochs_per_update: 2,
            hidden: alloc::vec![8],
            mee_budget: 50,
            ..PPOConfig::default()
        }
    }

    #[test]
    fn zero_steps_returns_initial_params() {
        let spec = TaskSpec::vpush();
        let w = RewardWeights::for_reference(spec.mee_reference);
        let t = Trainer::new(&spec, &tiny_cfg(0), &w, 0.0, 3).unwrap();
        let (p, log) = train_universal_policy(&spec, &tiny_cfg(0), &w, 0.0, 3).unwrap();
        assert_eq!(p, t.params);
        assert!(log.is_empty());
    }

    #[test]
    fn training_is_reproducible_and_resumable() {
        let spec = TaskSpec::vpush();
        let w = RewardWeights::for_reference(spec.mee_reference);
        let cfg = tiny_cfg(200);
        let (p1, l1) = train_universal_policy(&spec, &cfg, &w, 0.5, 7).unwrap();
        let (p2, l2) = train_universal_policy(&spec, &cfg, &w, 0.5, 7).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
        assert_eq!(l1.last().unwrap().step, 200);
        assert_eq!(l1.len(), 4);

        let mut t = Trainer::new(&spec, &cfg, &w, 0.5, 7).unwrap();
        t.update().unwrap();
        let mut resumed = t.clone();
        resumed.run().unwrap();
        assert_eq!(resumed.params, p1);
        assert_eq!(resumed.log, l1);
    }

    #[test]
    fn evaluation_is_deterministic_and_counts_episodes() {
        let spec = TaskSpec::catch();
        let p = PolicyParams::new(spec.observation_dim(), &[8], spec.action_dim(), -0.5, &mut rng_from_seed(1));
        let opts = || EvalOptions {
            episodes: 5,
            sigma: 0.3,
            mode: ActionMode::Deterministic,
            mee: None,
        };
        let a = evaluate(&spec, &p, None, opts(), 11).unwrap();
        let b = evaluate(&spec, &p, None, opts(), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.episodes, 5);
        assert!(a.steps <= 5 * spec.episode_length);
    }
}
