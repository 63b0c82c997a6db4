//! The full pipeline: train a universal policy, optimize the morphology,
//! then measure Q and the disturbance sweep. Every stage checkpoints to disk
//! and resumes from there.

use std::fs;
use std::path::{Path, PathBuf};

use cagecoopt_core::morph::{
    bo_baseline, ga_baseline, mtbo_loop, Evaluator, OptimizerKind, OptimizerRun, PolicyEvaluator, ScoreConfig,
    ScoreSample,
};
use cagecoopt_core::policy::{evaluate, ActionMode, EvalOptions, LogRow, PolicyParams, Trainer};
use cagecoopt_core::rng::split_seed;
use cagecoopt_core::tasks::TaskSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::formats::{self, FormatError, PolicyCheckpoint, RunFile, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("training failed: {0}")]
    Training(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("Q needs at least {needed} recorded iterations per run, found {found}")]
    MissingIterations { needed: usize, found: usize },
    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

/// Number of trailing best-found morphologies that enter Q.
pub const Q_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub success_rate: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QStats {
    pub q_mu: f64,
    /// Population standard deviation of the per-seed values.
    pub q_sigma: f64,
    pub per_seed: Vec<f64>,
    pub sigma: f64,
    pub n_rollouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub index: usize,
    pub seed: u64,
    pub training_log: Vec<LogRow>,
    pub train_steps: usize,
    pub run: Option<OptimizerRun>,
    pub best_d: Option<Vec<f64>>,
    /// This seed's Q contribution.
    pub q: Option<f64>,
    pub sweep: Vec<SweepRow>,
    /// Environment steps spent on optimizer evaluations, Q and the sweep.
    pub eval_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl SeedReport {
    fn new(index: usize, seed: u64) -> Self {
        Self {
            index,
            seed,
            training_log: Vec::new(),
            train_steps: 0,
            run: None,
            best_d: None,
            q: None,
            sweep: Vec::new(),
            eval_steps: 0,
            failure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub version: String,
    pub config: ExperimentConfig,
    pub morphology_names: Vec<String>,
    pub morphology_bounds: Vec<(f64, f64)>,
    pub seeds: Vec<SeedReport>,
    pub q: Option<QStats>,
    /// Sum of all training and evaluation steps in `seeds`.
    pub total_env_steps: usize,
    /// False when any stage of any seed failed.
    pub complete: bool,
}

impl ExperimentReport {
    pub fn empty(config: ExperimentConfig, spec: &TaskSpec) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            morphology_names: spec.morphology_names.clone(),
            morphology_bounds: spec.morphology_bounds.clone(),
            seeds: Vec::new(),
            q: None,
            total_env_steps: 0,
            complete: true,
        }
    }
}

fn seed_streams(replica: u64) -> (u64, u64, u64, u64) {
    (split_seed(replica, 0), split_seed(replica, 1), split_seed(replica, 2), split_seed(replica, 3))
}

/// Training state on disk: the full trainer plus the config it belongs to.
#[derive(Serialize, Deserialize)]
struct TrainState {
    schema_version: u32,
    config: ExperimentConfig,
    trainer: Trainer,
}

/// Trains (or resumes, or loads) the universal policy for one replica.
/// Writes `trainer.json` after every update, then `policy.json` and
/// `training_log.csv`.
pub fn train_or_resume(
    cfg: &ExperimentConfig,
    spec: &TaskSpec,
    seed: u64,
    dir: &Path,
) -> Result<PolicyCheckpoint, ExperimentError> {
    let weights = cfg.weights(spec);
    let policy_path = dir.join("policy.json");
    let fresh_ckpt = |params: PolicyParams, log: Vec<LogRow>| PolicyCheckpoint {
        schema_version: SCHEMA_VERSION,
        task: spec.clone(),
        ppo: cfg.ppo.clone(),
        weights,
        sigma: cfg.train_sigma,
        seed,
        params,
        log,
    };
    if policy_path.exists() {
        let c: PolicyCheckpoint = formats::read_versioned(&policy_path)?;
        if c == fresh_ckpt(c.params.clone(), c.log.clone()) {
            log::info!("loaded trained policy from {}", policy_path.display());
            return Ok(c);
        }
        log::warn!("{} belongs to a different config; retraining", policy_path.display());
    }
    let state_path = dir.join("trainer.json");
    let mut trainer = None;
    if state_path.exists() {
        match formats::read_versioned::<TrainState>(&state_path) {
            Ok(s) if s.config == *cfg && s.trainer.spec == *spec => {
                log::info!("resuming training at step {}", s.trainer.steps_done);
                trainer = Some(s.trainer);
            }
            Ok(_) => log::warn!("{} belongs to a different config; restarting", state_path.display()),
            Err(e) => log::warn!("ignoring unreadable training checkpoint ({e})"),
        }
    }
    let mut trainer = match trainer {
        Some(t) => t,
        None => Trainer::new(spec, &cfg.ppo, &weights, cfg.train_sigma, seed)
            .map_err(|e| ExperimentError::Training(e.to_string()))?,
    };
    while !trainer.finished() {
        let row = trainer.update().map_err(|e| ExperimentError::Training(e.to_string()))?;
        log::debug!("seed {seed}: {row:?}");
        let state = TrainState { schema_version: SCHEMA_VERSION, config: cfg.clone(), trainer };
        formats::write_json(&state_path, &state)?;
        trainer = state.trainer;
    }
    let ckpt = fresh_ckpt(trainer.params.clone(), trainer.log.clone());
    formats::write_json(&policy_path, &ckpt)?;
    formats::write_training_log(&dir.join("training_log.csv"), &ckpt.log)?;
    Ok(ckpt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CachedSample {
    d: Vec<f64>,
    h: usize,
    seed: u64,
    sample: ScoreSample,
}

#[derive(Serialize, Deserialize)]
struct OptimizerState {
    schema_version: u32,
    config: ExperimentConfig,
    optimizer: OptimizerKind,
    samples: Vec<CachedSample>,
    partial: Option<OptimizerRun>,
}

/// Replays cached scores and saves new ones after every iteration. Because
/// the optimizers are deterministic given their scores, a resumed run
/// retraces the interrupted one exactly.
struct Checkpointing<'a> {
    inner: &'a mut dyn Evaluator,
    state: OptimizerState,
    replay: usize,
    path: PathBuf,
    error: Option<FormatError>,
}

impl Evaluator for Checkpointing<'_> {
    fn bounds(&self) -> Vec<(f64, f64)> {
        self.inner.bounds()
    }

    fn n_tasks(&self) -> usize {
        self.inner.n_tasks()
    }

    fn valid(&self, d: &[f64]) -> bool {
        self.inner.valid(d)
    }

    fn score(&mut self, d: &[f64], h: usize, seed: u64) -> ScoreSample {
        if let Some(c) = self.state.samples.get(self.replay) {
            if c.d == d && c.h == h && c.seed == seed {
                self.replay += 1;
                return c.sample.clone();
            }
            log::warn!("optimizer checkpoint diverges from the replay; discarding the rest");
            self.state.samples.truncate(self.replay);
        }
        let sample = self.inner.score(d, h, seed);
        self.state.samples.push(CachedSample { d: d.to_vec(), h, seed, sample: sample.clone() });
        self.replay = self.state.samples.len();
        sample
    }

    fn on_iteration(&mut self, run: &OptimizerRun) {
        if self.replay < self.state.samples.len() {
            return;
        }
        self.state.partial = Some(run.clone());
        if let Err(e) = formats::write_json(&self.path, &self.state) {
            self.error.get_or_insert(e);
        }
    }
}

pub fn run_optimizer(
    kind: OptimizerKind,
    eval: &mut dyn Evaluator,
    cfg: &cagecoopt_core::morph::OptimizerConfig,
    seed: u64,
) -> Result<OptimizerRun, ExperimentError> {
    let r = match kind {
        OptimizerKind::Mtbo => mtbo_loop(eval, cfg, seed),
        OptimizerKind::Bo => bo_baseline(eval, cfg, seed),
        OptimizerKind::Ga => ga_baseline(eval, cfg, seed),
    };
    r.map_err(|e| ExperimentError::Optimization(e.to_string()))
}

/// Runs (or resumes) the configured optimizer with a frozen policy.
/// Writes `optimizer_state.json` every iteration and `run.json` at the end.
pub fn optimize_or_resume(
    cfg: &ExperimentConfig,
    spec: &TaskSpec,
    params: &PolicyParams,
    seed: u64,
    dir: &Path,
) -> Result<OptimizerRun, ExperimentError> {
    let run_path = dir.join("run.json");
    let state_path = dir.join("optimizer_state.json");
    let mut samples = Vec::new();
    if state_path.exists() {
        match formats::read_versioned::<OptimizerState>(&state_path) {
            Ok(s) if s.config == *cfg && s.optimizer == cfg.optimizer => samples = s.samples,
            Ok(_) => log::warn!("{} belongs to a different config; restarting", state_path.display()),
            Err(e) => log::warn!("ignoring unreadable optimizer checkpoint ({e})"),
        }
    }
    let mut inner = PolicyEvaluator { spec, params, cfg: cfg.score };
    let mut eval = Checkpointing {
        inner: &mut inner,
        state: OptimizerState {
            schema_version: SCHEMA_VERSION,
            config: cfg.clone(),
            optimizer: cfg.optimizer,
            samples,
            partial: None,
        },
        replay: 0,
        path: state_path,
        error: None,
    };
    let run = run_optimizer(cfg.optimizer, &mut eval, &cfg.bo, seed)?;
    if let Some(e) = eval.error {
        return Err(e.into());
    }
    let file = RunFile {
        schema_version: SCHEMA_VERSION,
        task: spec.name.clone(),
        morphology_names: spec.morphology_names.clone(),
        run,
    };
    formats::write_json(&run_path, &file)?;
    Ok(file.run)
}

/// Success rate of `d` over all shapes, `n_rollouts` episodes per shape.
/// Returns `(successes, episodes, steps)`.
fn success_over_shapes(
    spec: &TaskSpec,
    params: &PolicyParams,
    d: &[f64],
    sigma: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<(usize, usize, usize), ExperimentError> {
    let mut out = (0, 0, 0);
    for h in 0..spec.shapes.len() {
        let opts = EvalOptions { episodes: n_rollouts, sigma, mode: ActionMode::Deterministic, mee: None };
        let s = evaluate(spec, params, Some((d, h)), opts, split_seed(seed, h as u64))
            .map_err(|e| ExperimentError::Evaluation(e.to_string()))?;
        out.0 += s.successes;
        out.1 += s.episodes;
        out.2 += s.steps;
    }
    Ok(out)
}

/// Mean disturbed success rate of the last `Q_WINDOW` best-found
/// morphologies of one run. Returns `(q, steps)`.
pub fn q_for_run(
    spec: &TaskSpec,
    params: &PolicyParams,
    run: &OptimizerRun,
    sigma: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<(f64, usize), ExperimentError> {
    let found = run.iterations.len();
    let best = run.last_best(Q_WINDOW).ok_or(ExperimentError::MissingIterations { needed: Q_WINDOW, found })?;
    let (mut succ, mut eps, mut steps) = (0, 0, 0);
    for (i, d) in best.iter().enumerate() {
        let (s, e, t) = success_over_shapes(spec, params, d, sigma, n_rollouts, split_seed(seed, i as u64))?;
        succ += s;
        eps += e;
        steps += t;
    }
    Ok((succ as f64 / eps.max(1) as f64, steps))
}

/// Mean and population standard deviation of per-seed values.
pub fn q_stats(per_seed: Vec<f64>, sigma: f64, n_rollouts: usize) -> QStats {
    let n = per_seed.len().max(1) as f64;
    let q_mu = per_seed.iter().sum::<f64>() / n;
    let q_sigma = (per_seed.iter().map(|q| (q - q_mu).powi(2)).sum::<f64>() / n).sqrt();
    QStats { q_mu, q_sigma, per_seed, sigma, n_rollouts }
}

/// Q over several seeds: each entry pairs a run with the policy it used.
pub fn compute_q(
    spec: &TaskSpec,
    runs: &[(&OptimizerRun, &PolicyParams)],
    sigma: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<QStats, ExperimentError> {
    let per_seed = runs
        .iter()
        .enumerate()
        .map(|(i, (run, params))| q_for_run(spec, params, run, sigma, n_rollouts, split_seed(seed, i as u64)).map(|q| q.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(q_stats(per_seed, sigma, n_rollouts))
}

/// Success rate of `d` at each σ, pooled over shapes. Returns the rows and
/// the steps simulated.
pub fn sweep_disturbance(
    spec: &TaskSpec,
    params: &PolicyParams,
    d: &[f64],
    sigmas: &[f64],
    n_rollouts: usize,
    seed: u64,
) -> Result<(Vec<SweepRow>, usize), ExperimentError> {
    let mut steps = 0;
    let rows = sigmas
        .iter()
        .map(|&sigma| {
            let (s, e, t) = success_over_shapes(spec, params, d, sigma, n_rollouts, seed)?;
            steps += t;
            let p = s as f64 / e.max(1) as f64;
            let ci_halfwidth = 1.96 * (p * (1.0 - p) / e.max(1) as f64).sqrt();
            Ok(SweepRow { sigma, success_rate: p, ci_halfwidth })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok((rows, steps))
}

fn run_replica(
    cfg: &ExperimentConfig,
    spec: &TaskSpec,
    index: usize,
    dir: &Path,
) -> (SeedReport, Option<PolicyParams>) {
    let seed = cfg.replica_seed(index);
    let (train_seed, opt_seed, q_seed, sweep_seed) = seed_streams(seed);
    let mut rep = SeedReport::new(index, seed);
    let ckpt = match train_or_resume(cfg, spec, train_seed, dir) {
        Ok(c) => c,
        Err(e) => {
            rep.failure = Some(e.to_string());
            return (rep, None);
        }
    };
    rep.training_log = ckpt.log.clone();
    rep.train_steps = ckpt.log.last().map_or(0, |r| r.step);
    let params = ckpt.params;
    let stage = |rep: &mut SeedReport| -> Result<(), ExperimentError> {
        let run = optimize_or_resume(cfg, spec, &params, opt_seed, dir)?;
        rep.eval_steps += run.evaluations.iter().flat_map(|e| &e.samples).map(|s| s.steps).sum::<usize>();
        rep.best_d = Some(run.best_d.clone());
        rep.run = Some(run);
        let run = rep.run.as_ref().expect("set above");
        if run.iterations.len() >= Q_WINDOW {
            let (q, steps) = q_for_run(spec, &params, run, cfg.q_sigma, cfg.q_rollouts, q_seed)?;
            rep.q = Some(q);
            rep.eval_steps += steps;
        }
        if !cfg.sweep_sigmas.is_empty() {
            let (rows, steps) =
                sweep_disturbance(spec, &params, &run.best_d, &cfg.sweep_sigmas, cfg.sweep_rollouts, sweep_seed)?;
            rep.sweep = rows;
            rep.eval_steps += steps;
        }
        Ok(())
    };
    if let Err(e) = stage(&mut rep) {
        rep.failure = Some(e.to_string());
    }
    (rep, Some(params))
}

/// Runs every replica in parallel under `out_dir/seed_<i>/` and reduces the
/// results into one report. Stage failures are recorded in the report and
/// clear `complete`.
pub fn run_codesign(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    fs::create_dir_all(out_dir).map_err(|err| FormatError::Io { path: out_dir.to_path_buf(), err })?;
    let seeds: Vec<SeedReport> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.n_seeds)
            .map(|i| {
                let dir = out_dir.join(format!("seed_{i}"));
                let spec = &spec;
                s.spawn(move || run_replica(cfg, spec, i, &dir).0)
            })
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(i, h)| {
                h.join().unwrap_or_else(|_| {
                    let mut r = SeedReport::new(i, cfg.replica_seed(i));
                    r.failure = Some("replica panicked".into());
                    r
                })
            })
            .collect()
    });
    Ok(reduce(cfg.clone(), &spec, seeds))
}

/// Sequential reducer over finished replicas.
pub fn reduce(cfg: ExperimentConfig, spec: &TaskSpec, seeds: Vec<SeedReport>) -> ExperimentReport {
    let mut report = ExperimentReport::empty(cfg, spec);
    report.total_env_steps = seeds.iter().map(|s| s.train_steps + s.eval_steps).sum();
    report.complete = seeds.iter().all(|s| s.failure.is_none());
    let qs: Vec<f64> = seeds.iter().filter_map(|s| s.q).collect();
    if !qs.is_empty() && qs.len() == seeds.len() {
        report.q = Some(q_stats(qs, report.config.q_sigma, report.config.q_rollouts));
    }
    report.seeds = seeds;
    report
}

/// Scores designs with the configured score settings; shared by the CLI.
pub fn policy_evaluator<'a>(spec: &'a TaskSpec, params: &'a PolicyParams, score: ScoreConfig) -> PolicyEvaluator<'a> {
    PolicyEvaluator { spec, params, cfg: score }
}
