//! Multi-task Gaussian process with an intrinsic coregionalization kernel.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::nelder_mead::minimize;
use super::MorphError;
use crate::rng::Rng;

/// One observed score at normalized morphology `x ∈ [0,1]^D` and shape `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub h: usize,
    pub y: f64,
}

/// Kernel hyperparameters: `k = B[h,h']·σ²·exp(−½ Σ ((x−x')/ℓ)²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Symmetric PSD task covariance, `|H| × |H|`.
    pub task_covariance: Vec<Vec<f64>>,
}

impl Hyper {
    pub fn new(dim: usize, n_tasks: usize) -> Self {
        Self {
            lengthscales: vec![0.3; dim],
            signal_variance: 1.0,
            noise_variance: 1e-4,
            task_covariance: identity(n_tasks),
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.task_covariance.len()
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Squared-exponential correlation over normalized inputs.
pub fn k_se(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let z = (x - y) / l;
            z * z
        })
        .sum();
    (-0.5 * s).exp()
}

/// ICM kernel between `(a, ha)` and `(b, hb)`.
pub fn kernel(a: &[f64], ha: usize, b: &[f64], hb: usize, hyp: &Hyper) -> f64 {
    hyp.task_covariance[ha][hb] * hyp.signal_variance * k_se(a, b, &hyp.lengthscales)
}

/// How the task covariance is obtained when fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskCovariance {
    /// `B = W·Wᵀ + diag(κ)` with `W` of the given rank, rescaled to unit mean
    /// diagonal (the scale lives in the signal variance).
    Learned { rank: usize },
    Fixed(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_tasks: usize,
    pub task_covariance: TaskCovariance,
    /// Random restarts in addition to the default start.
    pub restarts: usize,
    pub max_evals: usize,
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise_variance_bounds: (f64, f64),
}

impl FitConfig {
    pub fn new(n_tasks: usize) -> Self {
        Self {
            n_tasks,
            task_covariance: if n_tasks == 1 {
                TaskCovariance::Fixed(identity(1))
            } else {
                TaskCovariance::Learned { rank: 1 }
            },
            restarts: 4,
            max_evals: 600,
            lengthscale_bounds: (0.02, 5.0),
            signal_variance_bounds: (1e-4, 1e2),
            noise_variance_bounds: (1e-8, 1.0),
        }
    }
}

/// Observations conditioned under fixed hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateState {
    pub observations: Vec<Observation>,
    pub hyper: Hyper,
    /// Mean of the observed targets, used as the prior mean.
    pub prior_mean: f64,
    /// Jitter that was added to the Gram diagonal.
    pub jitter: f64,
    /// Lower Cholesky factor of the Gram matrix, row-major `n × n`.
    pub chol: Vec<f64>,
    /// `K⁻¹ (y − m)`.
    pub alpha: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

const JITTERS: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

fn gram(obs: &[Observation], hyp: &Hyper) -> DMatrix<f64> {
    let n = obs.len();
    DMatrix::from_fn(n, n, |i, j| {
        let k = kernel(&obs[i].x, obs[i].h, &obs[j].x, obs[j].h, hyp);
        if i == j {
            k + hyp.noise_variance
        } else {
            k
        }
    })
}

fn factor(k: &DMatrix<f64>) -> Option<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> {
    for jitter in JITTERS {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            if c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Some((c, jitter));
            }
        }
    }
    None
}

impl SurrogateState {
    /// Conditions the GP on `obs` with hyperparameters `hyper`. Singular Gram
    /// matrices get jitter `1e-8` up to `1e-4` before failing.
    pub fn condition(obs: Vec<Observation>, hyper: Hyper) -> Result<Self, MorphError> {
        let mean = obs.iter().map(|o| o.y).sum::<f64>() / obs.len().max(1) as f64;
        Self::condition_with_mean(obs, hyper, mean)
    }

    /// As [`SurrogateState::condition`] with an explicit prior mean.
    pub fn condition_with_mean(obs: Vec<Observation>, hyper: Hyper, prior_mean: f64) -> Result<Self, MorphError> {
        validate_obs(&obs, &hyper)?;
        let n = obs.len();
        let y = DVector::from_iterator(n, obs.iter().map(|o| o.y - prior_mean));
        let (c, jitter) = factor(&gram(&obs, &hyper)).ok_or(MorphError::Singular)?;
        let alpha = c.solve(&y);
        let l = c.l();
        let log_det: f64 = l.diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * core::f64::consts::PI).ln();
        Ok(Self {
            observations: obs,
            hyper,
            prior_mean,
            jitter,
            chol: l.transpose().as_slice().to_vec(),
            alpha: alpha.as_slice().to_vec(),
            log_marginal_likelihood: lml,
        })
    }

    fn l(&self) -> DMatrix<f64> {
        let n = self.observations.len();
        DMatrix::from_row_slice(n, n, &self.chol)
    }
}

fn validate_obs(obs: &[Observation], hyper: &Hyper) -> Result<(), MorphError> {
    if obs.is_empty() {
        return Err(MorphError::InvalidData("no observations"));
    }
    let dim = hyper.lengthscales.len();
    for o in obs {
        if o.x.len() != dim {
            return Err(MorphError::InvalidData("observation dimension differs from the lengthscales"));
        }
        if o.h >= hyper.n_tasks() {
            return Err(MorphError::InvalidData("observation task index out of range"));
        }
        if !o.y.is_finite() || o.x.iter().any(|v| !v.is_finite()) {
            return Err(MorphError::InvalidData("non-finite observation"));
        }
    }
    Ok(())
}

/// Posterior mean and standard deviation of the latent score at `(x, h)`.
pub fn gp_predict(state: &SurrogateState, x: &[f64], h: usize) -> (f64, f64) {
    let hyp = &state.hyper;
    let n = state.observations.len();
    let ks = DVector::from_iterator(n, state.observations.iter().map(|o| kernel(&o.x, o.h, x, h, hyp)));
    let mu = state.prior_mean + ks.iter().zip(&state.alpha).map(|(k, a)| k * a).sum::<f64>();
    let v = state
        .l()
        .solve_lower_triangular(&ks)
        .unwrap_or_else(|| DVector::zeros(n));
    let prior = hyp.task_covariance[h][h] * hyp.signal_variance;
    let var = (prior - v.dot(&v)).max(0.0);
    (mu, var.sqrt())
}

/// Flat parameterization for the likelihood search.
struct Layout {
    dim: usize,
    n_tasks: usize,
    rank: Option<usize>,
}

impl Layout {
    fn len(&self) -> usize {
        self.dim + 2 + self.rank.map_or(0, |r| self.n_tasks * r + self.n_tasks)
    }

    fn decode(&self, p: &[f64], cfg: &FitConfig) -> Hyper {
        let clamp_exp = |v: f64, (lo, hi): (f64, f64)| v.clamp(lo.ln(), hi.ln()).exp();
        let lengthscales = p[..self.dim].iter().map(|v| clamp_exp(*v, cfg.lengthscale_bounds)).collect();
        let signal_variance = clamp_exp(p[self.dim], cfg.signal_variance_bounds);
        let noise_variance = clamp_exp(p[self.dim + 1], cfg.noise_variance_bounds);
        let task_covariance = match (self.rank, &cfg.task_covariance) {
            (Some(r), _) => {
                let t = self.n_tasks;
                let w = &p[self.dim + 2..self.dim + 2 + t * r];
                let kappa = &p[self.dim + 2 + t * r..];
                let mut b: Vec<Vec<f64>> = (0..t)
                    .map(|i| {
                        (0..t)
                            .map(|j| {
                                let wwt: f64 = (0..r).map(|k| w[i * r + k] * w[j * r + k]).sum();
                                wwt + if i == j { kappa[i].clamp(-12.0, 4.0).exp() } else { 0.0 }
                            })
                            .collect()
                    })
                    .collect();
                let scale = (0..t).map(|i| b[i][i]).sum::<f64>() / t as f64;
                for row in b.iter_mut() {
                    for v in row.iter_mut() {
                        *v /= scale;
                    }
                }
                b
            }
            (None, TaskCovariance::Fixed(b)) => b.clone(),
            (None, TaskCovariance::Learned { .. }) => identity(self.n_tasks),
        };
        Hyper {
            lengthscales,
            signal_variance,
            noise_variance,
            task_covariance,
        }
    }

    fn random_start(&self, cfg: &FitConfig, rng: &mut Rng) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.len());
        let uni = |(lo, hi): (f64, f64), rng: &mut Rng| rng.random_range(lo.ln()..hi.ln());
        for _ in 0..self.dim {
            p.push(uni((0.05, 1.0), rng));
        }
        p.push(uni((cfg.signal_variance_bounds.0.max(1e-3), 1.0), rng));
        p.push(uni((cfg.noise_variance_bounds.0.max(1e-6), 1e-2), rng));
        if let Some(r) = self.rank {
            for _ in 0..self.n_tasks * r {
                p.push(rng.random_range(-1.0..1.0));
            }
            for _ in 0..self.n_tasks {
                p.push(rng.random_range(-4.0..0.0));
            }
        }
        p
    }

    fn default_start(&self, var_y: f64, cfg: &FitConfig) -> Vec<f64> {
        let mut p = vec![0.3f64.ln(); self.dim];
        p.push(var_y.clamp(cfg.signal_variance_bounds.0, cfg.signal_variance_bounds.1).ln());
        p.push((1e-3 * var_y).clamp(cfg.noise_variance_bounds.0, cfg.noise_variance_bounds.1).ln());
        if let Some(r) = self.rank {
            p.extend(core::iter::repeat_n(0.7, self.n_tasks * r));
            p.extend(core::iter::repeat_n(-2.0, self.n_tasks));
        }
        p
    }
}

/// Fits hyperparameters by maximizing the log marginal likelihood with
/// multi-start Nelder–Mead over log-scale parameters, then conditions on the
/// data.
pub fn gp_fit(obs: &[Observation], cfg: &FitConfig, rng: &mut Rng) -> Result<SurrogateState, MorphError> {
    if obs.len() < 2 {
        return Err(MorphError::InvalidData("at least two observations are needed"));
    }
    let dim = obs[0].x.len();
    let rank = match &cfg.task_covariance {
        TaskCovariance::Learned { rank } if cfg.n_tasks > 1 => Some((*rank).max(1)),
        TaskCovariance::Fixed(b) => {
            if b.len() != cfg.n_tasks || b.iter().any(|r| r.len() != cfg.n_tasks) {
                return Err(MorphError::InvalidData("fixed task covariance has the wrong size"));
            }
            None
        }
        _ => None,
    };
    let layout = Layout {
        dim,
        n_tasks: cfg.n_tasks,
        rank,
    };
    validate_obs(obs, &Hyper::new(dim, cfg.n_tasks))?;
    let n = obs.len() as f64;
    let mean = obs.iter().map(|o| o.y).sum::<f64>() / n;
    let var_y = (obs.iter().map(|o| (o.y - mean).powi(2)).sum::<f64>() / n).max(1e-4);

    let objective = |p: &[f64]| -> f64 {
        let hyp = layout.decode(p, cfg);
        match SurrogateState::condition(obs.to_vec(), hyp) {
            Ok(s) if s.log_marginal_likelihood.is_finite() => -s.log_marginal_likelihood,
            _ => f64::INFINITY,
        }
    };
    let mut starts = vec![layout.default_start(var_y, cfg)];
    for _ in 0..cfg.restarts {
        starts.push(layout.random_start(cfg, rng));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let (p, v) = minimize(&objective, &s, 0.5, cfg.max_evals, 1e-9);
        if v.is_finite() && best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((p, v));
        }
    }
    let (p, _) = best.ok_or(MorphError::Singular)?;
    SurrogateState::condition(obs.to_vec(), layout.decode(&p, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn hyp_1d(l: f64, s2: f64, n2: f64) -> Hyper {
        Hyper {
            lengthscales: vec![l],
            signal_variance: s2,
            noise_variance: n2,
            task_covariance: identity(1),
        }
    }

    #[test]
    fn kernel_at_zero_distance_is_task_variance() {
        let mut h = Hyper::new(2, 2);
        h.signal_variance = 1.7;
        h.task_covariance = vec![vec![2.0, 0.3], vec![0.3, 0.5]];
        let x = [0.2, 0.9];
        assert!((kernel(&x, 0, &x, 0, &h) - 3.4).abs() < 1e-15);
        assert!((kernel(&x, 1, &x, 1, &h) - 0.85).abs() < 1e-15);
    }

    #[test]
    fn identity_tasks_are_independent() {
        let h = Hyper::new(2, 3);
        assert_eq!(kernel(&[0.1, 0.2], 0, &[0.1, 0.2], 2, &h), 0.0);
    }

    #[test]
    fn kernel_matches_scalar_formula() {
        let mut rng = rng_from_seed(4);
        for _ in 0..100 {
            let d = rng.random_range(1..5);
            let a: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..2.0)).collect();
            let s2 = rng.random_range(0.1..3.0);
            let b01 = rng.random_range(-1.0..1.0);
            let h = Hyper {
                lengthscales: ls.clone(),
                signal_variance: s2,
                noise_variance: 1e-6,
                task_covariance: vec![vec![1.5, b01], vec![b01, 1.2]],
            };
            let mut sq = 0.0;
            for i in 0..d {
                sq += (a[i] - b[i]) * (a[i] - b[i]) / (ls[i] * ls[i]);
            }
            let want = b01 * s2 * (-sq / 2.0).exp();
            assert!((kernel(&a, 0, &b, 1, &h) - want).abs() < 1e-12);
            assert_eq!(kernel(&a, 0, &b, 1, &h), kernel(&b, 1, &a, 0, &h));
        }
    }

    #[test]
    fn interpolates_noise_free_points() {
        let obs: Vec<Observation> = [0.1, 0.4, 0.8]
            .iter()
            .map(|&x| Observation { x: vec![x], h: 0, y: (6.0 * x).sin() })
            .collect();
        let s = SurrogateState::condition(obs.clone(), hyp_1d(0.3, 1.0, 1e-12)).unwrap();
        for o in &obs {
            let (mu, sd) = gp_predict(&s, &o.x, 0);
            assert!((mu - o.y).abs() < 1e-6);
            assert!(sd < 1e-3);
        }
    }

    #[test]
    fn reverts_to_the_prior_far_away() {
        let obs = vec![
            Observation { x: vec![0.0], h: 0, y: 1.0 },
            Observation { x: vec![0.05], h: 0, y: 0.5 },
        ];
        let s = SurrogateState::condition(obs, hyp_1d(0.1, 2.0, 1e-6)).unwrap();
        let (mu, sd) = gp_predict(&s, &[1.5], 0);
        assert!((mu - 0.75).abs() < 1e-6);
        assert!((sd * sd - 2.0).abs() < 0.02);
    }

    #[test]
    fn matches_direct_inverse_on_three_points() {
        let xs = [0.1, 0.35, 0.9];
        let ys = [0.2, -0.4, 0.7];
        let hyp = hyp_1d(0.25, 0.8, 1e-3);
        let obs: Vec<Observation> = xs.iter().zip(ys).map(|(&x, y)| Observation { x: vec![x], h: 0, y }).collect();
        let s = SurrogateState::condition(obs, hyp.clone()).unwrap();
        // explicit 3×3 inverse by cofactors
        let k = |a: f64, b: f64| 0.8 * (-0.5 * ((a - b) / 0.25f64).powi(2)).exp();
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = k(xs[i], xs[j]) + if i == j { 1e-3 } else { 0.0 };
            }
        }
        let inv = nalgebra::Matrix3::from_fn(|i, j| m[i][j]).try_inverse().unwrap();
        let mean = (0.2 - 0.4 + 0.7) / 3.0;
        let x = 0.5;
        let ks: Vec<f64> = xs.iter().map(|&a| k(a, x)).collect();
        let mut mu = mean;
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                mu += ks[i] * inv[(i, j)] * (ys[j] - mean);
                quad += ks[i] * inv[(i, j)] * ks[j];
            }
        }
        let (gmu, gsd) = gp_predict(&s, &[x], 0);
        assert!((gmu - mu).abs() < 1e-10);
        assert!((gsd * gsd - (0.8 - quad)).abs() < 1e-10);
    }

    #[test]
    fn duplicated_inputs_need_jitter_or_noise() {
        let obs: Vec<Observation> = (0..5).map(|_| Observation { x: vec![0.3], h: 0, y: 0.42 }).collect();
        let s = gp_fit(&obs, &FitConfig::new(1), &mut rng_from_seed(1)).unwrap();
        let (mu, _) = gp_predict(&s, &[0.3], 0);
        assert!((mu - 0.42).abs() < 1e-6);
        assert!(s.hyper.noise_variance < 1e-4, "noise {}", s.hyper.noise_variance);
    }

    fn sample_se_data(seed: u64, n: usize, l: f64) -> Vec<Observation> {
        let mut rng = rng_from_seed(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let k = DMatrix::from_fn(n, n, |i, j| {
            (-0.5 * ((xs[i] - xs[j]) / l).powi(2)).exp() + if i == j { 1e-6 } else { 0.0 }
        });
        let lchol = k.cholesky().unwrap().l();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let f = lchol * z;
        xs.iter()
            .zip(f.iter())
            .map(|(&x, &y)| {
                let e: f64 = StandardNormal.sample(&mut rng);
                Observation { x: vec![x], h: 0, y: y + 0.01 * e }
            })
            .collect()
    }

    #[test]
    fn recovers_a_known_lengthscale() {
        let mut ls: Vec<f64> = (0..10)
            .map(|seed| {
                let obs = sample_se_data(100 + seed, 40, 0.3);
                gp_fit(&obs, &FitConfig::new(1), &mut rng_from_seed(seed)).unwrap().hyper.lengthscales[0]
            })
            .collect();
        ls.sort_by(f64::total_cmp);
        let median = 0.5 * (ls[4] + ls[5]);
        assert!((0.15..=0.6).contains(&median), "median lengthscale {median}, all {ls:?}");
    }

    #[test]
    fn correlated_tasks_give_correlated_b() {
        let mut rng = rng_from_seed(3);
        let mut obs = Vec::new();
        for _ in 0..12 {
            let x: f64 = rng.random();
            let y = (5.0 * x).sin();
            obs.push(Observation { x: vec![x], h: 0, y });
            obs.push(Observation { x: vec![x], h: 1, y });
        }
        let s = gp_fit(&obs, &FitConfig::new(2), &mut rng_from_seed(9)).unwrap();
        let b = &s.hyper.task_covariance;
        let ratio = b[0][1] / (b[0][0] * b[1][1]).sqrt();
        assert!(ratio > 0.8, "B = {b:?}");
    }

    #[test]
    fn identity_b_equals_independent_gps() {
        let mut rng = rng_from_seed(5);
        let mut obs = Vec::new();
        for i in 0..14 {
            let x = vec![rng.random::<f64>(), rng.random::<f64>()];
            let y = x[0] * 2.0 - x[1] + 0.1 * i as f64;
            obs.push(Observation { x, h: i % 2, y });
        }
        let mut hyp = Hyper::new(2, 2);
        hyp.lengthscales = vec![0.4, 0.7];
        hyp.noise_variance = 1e-3;
        let joint = SurrogateState::condition(obs.clone(), hyp.clone()).unwrap();
        for h in 0..2 {
            let sub: Vec<Observation> = obs
                .iter()
                .filter(|o| o.h == h)
                .map(|o| Observation { x: o.x.clone(), h: 0, y: o.y })
                .collect();
            let mut single_hyp = hyp.clone();
            single_hyp.task_covariance = identity(1);
            let single = SurrogateState::condition_with_mean(sub, single_hyp, joint.prior_mean).unwrap();
            for _ in 0..20 {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                let (mj, sj) = gp_predict(&joint, &x, h);
                let (ms, ss) = gp_predict(&single, &x, 0);
                assert!((mj - ms).abs() < 1e-8, "{mj} vs {ms}");
                assert!((sj - ss).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gram_matrices_are_psd_after_jitter() {
        let mut rng = rng_from_seed(12);
        for _ in 0..100 {
            let n = rng.random_range(2..25);
            let d = rng.random_range(1..4);
            let t = rng.random_range(1..4);
            let w: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<Vec<f64>> = (0..t)
                .map(|i| (0..t).map(|j| w[i] * w[j] + if i == j { 0.05 } else { 0.0 }).collect())
                .collect();
            let hyp = Hyper {
                lengthscales: (0..d).map(|_| rng.random_range(0.05..3.0)).collect(),
                signal_variance: rng.random_range(0.1..2.0),
                noise_variance: 1e-10,
                task_covariance: b,
            };
            let obs: Vec<Observation> = (0..n)
                .map(|_| Observation {
                    x: (0..d).map(|_| rng.random()).collect(),
                    h: rng.random_range(0..t),
                    y: rng.random(),
                })
                .collect();
            let s = SurrogateState::condition(obs.clone(), hyp.clone()).unwrap();
            let mut k = gram(&obs, &hyp);
            for i in 0..n {
                k[(i, i)] += s.jitter;
            }
            let min = k.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-8, "min eigenvalue {min}");
        }
    }

    #[test]
    fn singular_data_is_an_error_only_when_jitter_fails() {
        let obs = vec![Observation { x: vec![0.5], h: 0, y: f64::NAN }];
        assert!(SurrogateState::condition(obs, hyp_1d(0.3, 1.0, 0.0)).is_err());
    }
}
