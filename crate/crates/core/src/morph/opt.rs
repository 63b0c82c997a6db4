//! MTBO, single-task BO and GA over morphologies.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::acq::{best_morphology, next_query, AcqConfig};
use super::gp::{gp_fit, FitConfig, Hyper, Observation, SurrogateState};
use super::score::{DesignPoint, ScoreSample};
use super::acq::mean_over_tasks;
use super::MorphError;
use crate::rng::{split_seed, substream, Rng};

/// Something that scores a morphology `d` (raw units) on shape `h`.
pub trait Evaluator {
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn n_tasks(&self) -> usize;
    fn valid(&self, d: &[f64]) -> bool;
    fn score(&mut self, d: &[f64], h: usize, seed: u64) -> ScoreSample;
    /// Called with the run so far after every recorded iteration.
    fn on_iteration(&mut self, _run: &OptimizerRun) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Mtbo,
    Bo,
    Ga,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Mtbo => "mtbo",
            OptimizerKind::Bo => "bo",
            OptimizerKind::Ga => "ga",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GAConfig {
    pub population: usize,
    pub mutation_rate: f64,
    /// Standard deviation of a mutation step in normalized coordinates.
    pub mutation_sigma: f64,
    pub elitism: usize,
}

impl Default for GAConfig {
    fn default() -> Self {
        Self {
            population: 4,
            mutation_rate: 0.1,
            mutation_sigma: 0.1,
            elitism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Optimizer iterations after the initial design (GA: generations).
    pub iterations: usize,
    /// Initial random evaluations (MTBO cycles them over the shapes).
    pub n_init: usize,
    pub acq: AcqConfig,
    pub gp_restarts: usize,
    pub gp_max_evals: usize,
    pub ga: GAConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            n_init: 2,
            acq: AcqConfig::default(),
            gp_restarts: 2,
            gp_max_evals: 400,
            ga: GAConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), MorphError> {
        if self.n_init == 0 {
            return Err(MorphError::Config("n_init must be at least 1"));
        }
        if self.acq.candidate_count == 0 || !(self.acq.lambda_ucb >= 0.0) {
            return Err(MorphError::Config("acquisition needs candidates and lambda_ucb ≥ 0"));
        }
        if self.ga.population < 2 || self.ga.elitism >= self.ga.population {
            return Err(MorphError::Config("GA needs population ≥ 2 and elitism < population"));
        }
        if !(0.0..=1.0).contains(&self.ga.mutation_rate) || !(self.ga.mutation_sigma >= 0.0) {
            return Err(MorphError::Config("GA mutation parameters out of range"));
        }
        Ok(())
    }
}

/// One design evaluation. For BO and GA the design is scored on every shape
/// and `h` is `None`; `f`, `f_suc`, `f_mee` are then shape averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub iteration: usize,
    pub d: Vec<f64>,
    pub h: Option<usize>,
    pub f: f64,
    pub f_suc: f64,
    pub f_mee: f64,
    pub rollouts: usize,
    pub cumulative_rollouts: usize,
    pub samples: Vec<ScoreSample>,
}

/// State after each iteration (iteration 0 is the initial design).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Best-found morphology so far.
    pub best_d: Vec<f64>,
    /// Its predicted shape-averaged score (GP mean, or GA fitness).
    pub best_score: f64,
    pub cumulative_rollouts: usize,
    pub hyper: Option<Hyper>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRun {
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub n_tasks: usize,
    pub evaluations: Vec<Evaluation>,
    pub iterations: Vec<IterationRecord>,
    pub best_d: Vec<f64>,
    pub total_rollouts: usize,
    pub gp_fit_failures: usize,
}

impl OptimizerRun {
    fn new(optimizer: OptimizerKind, seed: u64, n_tasks: usize) -> Self {
        Self {
            optimizer,
            seed,
            n_tasks,
            evaluations: Vec::new(),
            iterations: Vec::new(),
            best_d: Vec::new(),
            total_rollouts: 0,
            gp_fit_failures: 0,
        }
    }

    fn record_eval(&mut self, iteration: usize, d: Vec<f64>, h: Option<usize>, samples: Vec<ScoreSample>) -> f64 {
        let n = samples.len().max(1) as f64;
        let rollouts: usize = samples.iter().map(|s| s.n_rollouts).sum();
        self.total_rollouts += rollouts;
        let f = samples.iter().map(|s| s.f).sum::<f64>() / n;
        self.evaluations.push(Evaluation {
            iteration,
            d,
            h,
            f,
            f_suc: samples.iter().map(|s| s.f_suc).sum::<f64>() / n,
            f_mee: samples.iter().map(|s| s.f_mee).sum::<f64>() / n,
            rollouts,
            cumulative_rollouts: self.total_rollouts,
            samples,
        });
        f
    }

    fn record_iteration(&mut self, iteration: usize, best_d: Vec<f64>, best_score: f64, hyper: Option<Hyper>) {
        self.best_d = best_d.clone();
        self.iterations.push(IterationRecord {
            iteration,
            best_d,
            best_score,
            cumulative_rollouts: self.total_rollouts,
            hyper,
        });
    }

    /// Best-found morphologies of the last `n` iterations.
    pub fn last_best(&self, n: usize) -> Option<Vec<Vec<f64>>> {
        (self.iterations.len() >= n).then(|| {
            self.iterations[self.iterations.len() - n..]
                .iter()
                .map(|r| r.best_d.clone())
                .collect()
        })
    }
}

struct Space {
    bounds: Vec<(f64, f64)>,
}

impl Space {
    fn to_raw(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect()
    }
}

const SAMPLE_ATTEMPTS: usize = 10_000;

fn random_valid(space: &Space, eval: &dyn Evaluator, rng: &mut Rng) -> Result<Vec<f64>, MorphError> {
    for _ in 0..SAMPLE_ATTEMPTS {
        let x: Vec<f64> = (0..space.bounds.len()).map(|_| rng.random()).collect();
        if eval.valid(&space.to_raw(&x)) {
            return Ok(x);
        }
    }
    Err(MorphError::NoValidDesign)
}

fn score_all(eval: &mut dyn Evaluator, d: &[f64], seed: u64) -> Vec<ScoreSample> {
    (0..eval.n_tasks()).map(|h| eval.score(d, h, split_seed(seed, h as u64))).collect()
}

fn evaluate_design(
    run: &mut OptimizerRun,
    eval: &mut dyn Evaluator,
    space: &Space,
    iteration: usize,
    x: &[f64],
    h: Option<usize>,
) -> f64 {
    let d = space.to_raw(x);
    let seed = split_seed(run.seed, 100 + run.evaluations.len() as u64);
    let samples = match h {
        Some(h) => vec![eval.score(&d, h, split_seed(seed, h as u64))],
        None => score_all(eval, &d, seed),
    };
    run.record_eval(iteration, d, h, samples)
}

/// GP loop shared by MTBO (`multi_task`) and BO.
fn bayes_loop(
    eval: &mut dyn Evaluator,
    cfg: &OptimizerConfig,
    seed: u64,
    multi_task: bool,
) -> Result<OptimizerRun, MorphError> {
    cfg.validate()?;
    let space = Space { bounds: eval.bounds() };
    let dim = space.bounds.len();
    let n_shapes = eval.n_tasks();
    if n_shapes == 0 || dim == 0 {
        return Err(MorphError::Config("empty design space or shape set"));
    }
    let gp_tasks = if multi_task { n_shapes } else { 1 };
    let kind = if multi_task { OptimizerKind::Mtbo } else { OptimizerKind::Bo };
    let mut run = OptimizerRun::new(kind, seed, n_shapes);
    let mut init_rng = substream(seed, 0);
    let mut fit_rng = substream(seed, 1);
    let mut acq_rng = substream(seed, 2);
    let fit_cfg = FitConfig {
        restarts: cfg.gp_restarts,
        max_evals: cfg.gp_max_evals,
        ..FitConfig::new(gp_tasks)
    };

    let mut obs: Vec<Observation> = Vec::new();
    let n_init = if multi_task { cfg.n_init.max(n_shapes) } else { cfg.n_init };
    for i in 0..n_init {
        let x = random_valid(&space, eval, &mut init_rng)?;
        let h = i % gp_tasks;
        let y = evaluate_design(&mut run, eval, &space, 0, &x, multi_task.then_some(h));
        obs.push(Observation { x, h, y });
    }

    let mut prev: Option<Hyper> = None;
    let tasks: Vec<usize> = (0..gp_tasks).collect();
    for it in 0..=cfg.iterations {
        let state = match gp_fit(&obs, &fit_cfg, &mut fit_rng) {
            Ok(s) => s,
            Err(e) => {
                run.gp_fit_failures += 1;
                let hyp = prev.clone().unwrap_or_else(|| Hyper::new(dim, gp_tasks));
                log::warn!("GP fit failed at iteration {it} ({e}); reusing previous hyperparameters");
                SurrogateState::condition(obs.clone(), hyp)?
            }
        };
        let xs: Vec<Vec<f64>> = obs.iter().map(|o| o.x.clone()).collect();
        let b = best_morphology(&state, &xs, gp_tasks).ok_or(MorphError::NoValidDesign)?;
        let best_score = mean_over_tasks(&state, &xs[b], gp_tasks);
        run.record_iteration(it, space.to_raw(&xs[b]), best_score, Some(state.hyper.clone()));
        eval.on_iteration(&run);
        prev = Some(state.hyper.clone());
        if it == cfg.iterations {
            break;
        }
        let valid = |x: &[f64]| eval.valid(&space.to_raw(x));
        let (x, h) =
            next_query(&state, &cfg.acq, dim, &tasks, &valid, &mut acq_rng).ok_or(MorphError::NoValidDesign)?;
        let y = evaluate_design(&mut run, eval, &space, it + 1, &x, multi_task.then_some(h));
        obs.push(Observation { x, h, y });
    }
    Ok(run)
}

/// Multi-task BO: one `(d, h)` pair per iteration.
pub fn mtbo_loop(eval: &mut dyn Evaluator, cfg: &OptimizerConfig, seed: u64) -> Result<OptimizerRun, MorphError> {
    bayes_loop(eval, cfg, seed, true)
}

/// Single-task BO on the shape-averaged score.
pub fn bo_baseline(eval: &mut dyn Evaluator, cfg: &OptimizerConfig, seed: u64) -> Result<OptimizerRun, MorphError> {
    bayes_loop(eval, cfg, seed, false)
}

/// Generational GA on the shape-averaged score. `cfg.iterations` is the
/// number of generations after the initial population.
pub fn ga_baseline(eval: &mut dyn Evaluator, cfg: &OptimizerConfig, seed: u64) -> Result<OptimizerRun, MorphError> {
    cfg.validate()?;
    let ga = cfg.ga;
    let space = Space { bounds: eval.bounds() };
    let dim = space.bounds.len();
    if eval.n_tasks() == 0 || dim == 0 {
        return Err(MorphError::Config("empty design space or shape set"));
    }
    let mut run = OptimizerRun::new(OptimizerKind::Ga, seed, eval.n_tasks());
    let mut init_rng = substream(seed, 0);
    let mut rng = substream(seed, 3);

    let mut pop: Vec<(Vec<f64>, f64)> = Vec::with_capacity(ga.population);
    for _ in 0..ga.population {
        let x = random_valid(&space, eval, &mut init_rng)?;
        let f = evaluate_design(&mut run, eval, &space, 0, &x, None);
        pop.push((x, f));
    }
    let record = |run: &mut OptimizerRun, eval: &mut dyn Evaluator, pop: &[(Vec<f64>, f64)], it: usize| {
        let best = ranked(pop)[0];
        run.record_iteration(it, space.to_raw(&pop[best].0), pop[best].1, None);
        eval.on_iteration(run);
    };
    record(&mut run, eval, &pop, 0);

    for it in 1..=cfg.iterations {
        let order = ranked(&pop);
        let mut next: Vec<(Vec<f64>, f64)> = order[..ga.elitism].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < ga.population {
            let child = breed(&pop, &ga, &space, eval, &mut rng)?;
            let f = evaluate_design(&mut run, eval, &space, it, &child, None);
            next.push((child, f));
        }
        pop = next;
        record(&mut run, eval, &pop, it);
    }
    Ok(run)
}

/// Population indices by decreasing fitness; stable for ties.
fn ranked(pop: &[(Vec<f64>, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| pop[b].1.total_cmp(&pop[a].1));
    idx
}

fn tournament<'p>(pop: &'p [(Vec<f64>, f64)], rng: &mut Rng) -> &'p [f64] {
    let a = rng.random_range(0..pop.len());
    let b = rng.random_range(0..pop.len());
    if pop[b].1 > pop[a].1 {
        &pop[b].0
    } else {
        &pop[a].0
    }
}

fn breed(
    pop: &[(Vec<f64>, f64)],
    ga: &GAConfig,
    space: &Space,
    eval: &dyn Evaluator,
    rng: &mut Rng,
) -> Result<Vec<f64>, MorphError> {
    for _ in 0..SAMPLE_ATTEMPTS {
        let (p, q) = (tournament(pop, rng), tournament(pop, rng));
        let child: Vec<f64> = p
            .iter()
            .zip(q)
            .map(|(&a, &b)| {
                let mut g = if rng.random::<bool>() { a } else { b };
                if rng.random::<f64>() < ga.mutation_rate {
                    let z: f64 = StandardNormal.sample(rng);
                    g = (g + ga.mutation_sigma * z).clamp(0.0, 1.0);
                }
                g
            })
            .collect();
        if eval.valid(&space.to_raw(&child)) {
            return Ok(child);
        }
    }
    Err(MorphError::NoValidDesign)
}

/// Cumulative rollouts at the first iteration after which the best-found
/// score stays within `tol` (relative) of its final value for at least
/// `window` consecutive iterations. `None` if that never happens.
pub fn rollouts_to_converge(run: &OptimizerRun, tol: f64, window: usize) -> Option<usize> {
    let last = run.iterations.last()?.best_score;
    let band = tol * last.abs().max(1e-12);
    let n = run.iterations.len();
    let mut start = n;
    while start > 0 && (run.iterations[start - 1].best_score - last).abs() <= band {
        start -= 1;
    }
    (n - start >= window).then(|| run.iterations[start].cumulative_rollouts)
}

/// Cumulative rollouts at the first iteration whose best-found morphology has
/// `value(d) ≥ target`.
pub fn rollouts_to_reach(run: &OptimizerRun, value: &dyn Fn(&[f64]) -> f64, target: f64) -> Option<usize> {
    run.iterations
        .iter()
        .find(|r| value(&r.best_d) >= target)
        .map(|r| r.cumulative_rollouts)
}

/// Two correlated shapes on `[0,1]²`: `f0 = exp(−|x − c|²/(2·0.2²))` and
/// `f1 = 0.8·f0 + 0.1`, observed with Gaussian noise. The shape-averaged
/// optimum is 0.95 at `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTwoTask {
    pub center: [f64; 2],
    pub noise: f64,
    pub n_rollouts: usize,
}

impl Default for SyntheticTwoTask {
    fn default() -> Self {
        Self {
            center: [0.62, 0.37],
            noise: 0.01,
            n_rollouts: 10,
        }
    }
}

impl SyntheticTwoTask {
    pub const OPTIMUM: f64 = 0.95;

    pub fn value(&self, d: &[f64], h: usize) -> f64 {
        let r2 = (d[0] - self.center[0]).powi(2) + (d[1] - self.center[1]).powi(2);
        let f0 = (-r2 / (2.0 * 0.2 * 0.2)).exp();
        if h == 0 {
            f0
        } else {
            0.8 * f0 + 0.1
        }
    }

    pub fn mean_value(&self, d: &[f64]) -> f64 {
        0.5 * (self.value(d, 0) + self.value(d, 1))
    }
}

impl Evaluator for SyntheticTwoTask {
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); 2]
    }

    fn n_tasks(&self) -> usize {
        2
    }

    fn valid(&self, _d: &[f64]) -> bool {
        true
    }

    fn score(&mut self, d: &[f64], h: usize, seed: u64) -> ScoreSample {
        let z: f64 = StandardNormal.sample(&mut crate::rng::rng_from_seed(seed));
        let f = self.value(d, h) + self.noise * z;
        ScoreSample {
            delta: DesignPoint { d: d.to_vec(), h },
            f,
            f_suc: f,
            f_mee: 0.0,
            f_mee_normalized: 0.0,
            n_rollouts: self.n_rollouts,
            steps: 0,
        }
    }
}
