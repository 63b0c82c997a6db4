//! Performance score of a design under a frozen policy.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::opt::Evaluator;
use crate::policy::{evaluate, ActionMode, EvalOptions, PlannerMee, PolicyParams};
use crate::rng::substream;
use crate::tasks::{make_manipulator, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub d: Vec<f64>,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSample {
    pub delta: DesignPoint,
    /// `w·f_suc + (1 − w)·f_mee_normalized`.
    pub f: f64,
    pub f_suc: f64,
    /// Mean trajectory-average escape energy (J).
    pub f_mee: f64,
    /// `f_mee / mee_reference`, clamped to `[0, 1]`.
    pub f_mee_normalized: f64,
    pub n_rollouts: usize,
    /// Environment steps simulated for this sample.
    pub steps: usize,
}

/// The score mixture; `f_mee` is normalized by `reference` and clamped.
pub fn mix_score(w: f64, f_suc: f64, f_mee: f64, reference: f64) -> (f64, f64) {
    let norm = (f_mee / reference).clamp(0.0, 1.0);
    (w * f_suc + (1.0 - w) * norm, norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    /// Weight of the success rate.
    pub w: f64,
    pub n_rollouts: usize,
    pub sigma: f64,
    pub mee_budget: usize,
    pub mee_every_k_steps: usize,
    pub mode: ActionMode,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            w: 0.5,
            n_rollouts: 20,
            sigma: 0.0,
            mee_budget: 200,
            mee_every_k_steps: 5,
            mode: ActionMode::Deterministic,
        }
    }
}

/// Success rate and average escape energy of `(d, h)` over `n_rollouts`
/// disturbed rollouts. Rollouts that diverge or cannot be reset count as
/// failures.
pub fn performance_score(
    spec: &TaskSpec,
    params: &PolicyParams,
    d: &[f64],
    h: usize,
    cfg: &ScoreConfig,
    seed: u64,
) -> ScoreSample {
    let mut provider = PlannerMee {
        budget: cfg.mee_budget,
        rng: substream(seed, 1),
    };
    let opts = EvalOptions {
        episodes: cfg.n_rollouts,
        sigma: cfg.sigma,
        mode: cfg.mode,
        mee: Some((&mut provider, cfg.mee_every_k_steps)),
    };
    let (f_suc, f_mee, steps) = match evaluate(spec, params, Some((d, h)), opts, seed) {
        Ok(s) => (s.success_rate, s.mean_mee, s.steps),
        Err(e) => {
            log::warn!("evaluation of {d:?} (h = {h}) failed ({e}); scored as failure");
            (0.0, 0.0, 0)
        }
    };
    let (f, f_mee_normalized) = mix_score(cfg.w, f_suc, f_mee, spec.mee_reference);
    ScoreSample {
        delta: DesignPoint { d: d.to_vec(), h },
        f,
        f_suc,
        f_mee,
        f_mee_normalized,
        n_rollouts: cfg.n_rollouts,
        steps,
    }
}

/// Scores designs of a task with a frozen policy.
pub struct PolicyEvaluator<'a> {
    pub spec: &'a TaskSpec,
    pub params: &'a PolicyParams,
    pub cfg: ScoreConfig,
}

impl Evaluator for PolicyEvaluator<'_> {
    fn bounds(&self) -> Vec<(f64, f64)> {
        self.spec.morphology_bounds.clone()
    }

    fn n_tasks(&self) -> usize {
        self.spec.shapes.len()
    }

    fn valid(&self, d: &[f64]) -> bool {
        make_manipulator(self.spec, d).is_ok()
    }

    fn score(&mut self, d: &[f64], h: usize, seed: u64) -> ScoreSample {
        performance_score(self.spec, self.params, d, h, &self.cfg, seed)
    }
}
