//! Acquisition, candidate generation and best-design selection.

use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gp::{gp_predict, SurrogateState};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateScheme {
    UniformRandom,
    /// Halton points with a random shift (Cranley–Patterson rotation).
    LowDiscrepancy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcqConfig {
    pub lambda_ucb: f64,
    /// Candidates per task.
    pub candidate_count: usize,
    pub candidate_scheme: CandidateScheme,
}

impl Default for AcqConfig {
    fn default() -> Self {
        Self {
            lambda_ucb: 2.0,
            candidate_count: 512,
            candidate_scheme: CandidateScheme::LowDiscrepancy,
        }
    }
}

/// `μ + λ·σ` at `(x, h)`.
pub fn acquisition(state: &SurrogateState, x: &[f64], h: usize, lambda_ucb: f64) -> f64 {
    let (mu, sigma) = gp_predict(state, x, h);
    mu + lambda_ucb * sigma
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Van der Corput radical inverse of `i` in `base`.
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// `count` points in `[0,1]^dim`.
pub fn candidates(dim: usize, count: usize, scheme: CandidateScheme, rng: &mut Rng) -> Vec<Vec<f64>> {
    match scheme {
        CandidateScheme::UniformRandom => (0..count).map(|_| (0..dim).map(|_| rng.random()).collect()).collect(),
        CandidateScheme::LowDiscrepancy => {
            let shift: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
            (1..=count as u64)
                .map(|i| {
                    (0..dim)
                        .map(|k| {
                            let v = radical_inverse(i, PRIMES[k % PRIMES.len()]) + shift[k];
                            v - v.floor()
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Index of the candidate `(x, h)` with the largest acquisition; the first
/// one wins ties. `None` for an empty list.
pub fn argmax_acquisition(state: &SurrogateState, cands: &[(Vec<f64>, usize)], lambda_ucb: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (x, h)) in cands.iter().enumerate() {
        let a = acquisition(state, x, *h, lambda_ucb);
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i)
}

/// Next design to evaluate: the acquisition argmax over `candidate_count`
/// points for every task in `tasks`, keeping only points that pass `valid`.
pub fn next_query(
    state: &SurrogateState,
    cfg: &AcqConfig,
    dim: usize,
    tasks: &[usize],
    valid: &dyn Fn(&[f64]) -> bool,
    rng: &mut Rng,
) -> Option<(Vec<f64>, usize)> {
    let mut cands = Vec::new();
    for &h in tasks {
        for x in candidates(dim, cfg.candidate_count, cfg.candidate_scheme, rng) {
            if valid(&x) {
                cands.push((x, h));
            }
        }
    }
    argmax_acquisition(state, &cands, cfg.lambda_ucb).map(|i| cands.swap_remove(i))
}

/// Posterior mean averaged over tasks `0..n_tasks`.
pub fn mean_over_tasks(state: &SurrogateState, x: &[f64], n_tasks: usize) -> f64 {
    (0..n_tasks).map(|h| gp_predict(state, x, h).0).sum::<f64>() / n_tasks as f64
}

/// Index of the candidate with the best task-averaged posterior mean; the
/// first one wins ties.
pub fn best_morphology(state: &SurrogateState, cands: &[Vec<f64>], n_tasks: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in cands.iter().enumerate() {
        let m = mean_over_tasks(state, x, n_tasks);
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((i, m));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morph::gp::{gp_fit, FitConfig, Hyper, Observation};
    use crate::rng::rng_from_seed;
    use alloc::vec;

    fn toy_state(n_tasks: usize) -> SurrogateState {
        let mut rng = rng_from_seed(1);
        let obs: Vec<Observation> = (0..16)
            .map(|i| {
                let x = vec![rng.random::<f64>(), rng.random::<f64>()];
                let h = i % n_tasks;
                let y = (3.0 * x[0]).sin() * (2.0 * x[1]).cos() + 0.2 * h as f64;
                Observation { x, h, y }
            })
            .collect();
        gp_fit(&obs, &FitConfig::new(n_tasks), &mut rng).unwrap()
    }

    #[test]
    fn lambda_zero_is_the_mean_and_lambda_is_monotone() {
        let s = toy_state(2);
        let x = [0.3, 0.6];
        assert_eq!(acquisition(&s, &x, 1, 0.0), gp_predict(&s, &x, 1).0);
        let mut prev = f64::NEG_INFINITY;
        for l in [0.0, 0.5, 1.0, 2.0, 5.0] {
            let a = acquisition(&s, &x, 0, l);
            assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn ucb_arithmetic() {
        let obs = vec![
            Observation { x: vec![0.0], h: 0, y: 0.5 },
            Observation { x: vec![1.0], h: 0, y: 0.5 },
        ];
        let mut hyp = Hyper::new(1, 1);
        hyp.lengthscales = vec![1e-3];
        hyp.signal_variance = 0.04;
        let s = SurrogateState::condition(obs, hyp).unwrap();
        // far from both points: (μ, σ) = (0.5, 0.2)
        assert!((acquisition(&s, &[0.5], 0, 1.0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn single_candidate_and_dominator() {
        let s = toy_state(1);
        let one = vec![(vec![0.2, 0.2], 0)];
        assert_eq!(argmax_acquisition(&s, &one, 1.0), Some(0));

        let obs = vec![
            Observation { x: vec![0.0], h: 0, y: 1.0 },
            Observation { x: vec![1.0], h: 0, y: -1.0 },
        ];
        let mut hyp = Hyper::new(1, 1);
        hyp.lengthscales = vec![0.2];
        let s = SurrogateState::condition(obs, hyp).unwrap();
        let cands = vec![(vec![0.95], 0), (vec![0.3], 0), (vec![0.9], 0)];
        let (a, b) = (gp_predict(&s, &[0.3], 0), gp_predict(&s, &[0.95], 0));
        let c = gp_predict(&s, &[0.9], 0);
        assert!(a.0 > b.0 && a.1 > b.1 && a.0 > c.0 && a.1 > c.1);
        for l in [0.0, 0.7, 3.0] {
            assert_eq!(argmax_acquisition(&s, &cands, l), Some(1));
        }
    }

    #[test]
    fn next_query_is_the_exhaustive_argmax() {
        let s = toy_state(2);
        let cfg = AcqConfig {
            lambda_ucb: 1.5,
            candidate_count: 500,
            candidate_scheme: CandidateScheme::UniformRandom,
        };
        let (x, h) = next_query(&s, &cfg, 2, &[0, 1], &|_| true, &mut rng_from_seed(3)).unwrap();
        let mut rng = rng_from_seed(3);
        let mut best = f64::NEG_INFINITY;
        for t in [0, 1] {
            for c in candidates(2, 500, cfg.candidate_scheme, &mut rng) {
                best = best.max(acquisition(&s, &c, t, 1.5));
            }
        }
        assert_eq!(acquisition(&s, &x, h, 1.5), best);
    }

    #[test]
    fn best_morphology_matches_exhaustive_average() {
        let s = toy_state(3);
        let cands = candidates(2, 200, CandidateScheme::LowDiscrepancy, &mut rng_from_seed(8));
        let i = best_morphology(&s, &cands, 3).unwrap();
        let avg = |x: &[f64]| (0..3).map(|h| gp_predict(&s, x, h).0).sum::<f64>() / 3.0;
        let m = cands.iter().map(|c| avg(c)).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(avg(&cands[i]), m);
    }

    #[test]
    fn halton_points_fill_the_cube() {
        let pts = candidates(2, 256, CandidateScheme::LowDiscrepancy, &mut rng_from_seed(0));
        let mut cells = [0usize; 16];
        for p in &pts {
            cells[(p[0] * 4.0) as usize * 4 + (p[1] * 4.0) as usize] += 1;
        }
        assert!(cells.iter().all(|&c| (10..=22).contains(&c)), "{cells:?}");
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn affine_transform_keeps_the_argmax() {
        let mut rng = rng_from_seed(21);
        let obs: Vec<Observation> = (0..12)
            .map(|i| {
                let x = vec![rng.random::<f64>()];
                Observation { y: (7.0 * x[0]).sin(), x, h: i % 2 }
            })
            .collect();
        let mut hyp = Hyper::new(1, 2);
        hyp.task_covariance = vec![vec![1.0, 0.6], vec![0.6, 1.0]];
        hyp.noise_variance = 1e-4;
        let s1 = SurrogateState::condition(obs.clone(), hyp.clone()).unwrap();
        let (a, b) = (3.0, -1.5);
        let scaled: Vec<Observation> = obs.iter().map(|o| Observation { y: a * o.y + b, ..o.clone() }).collect();
        let s2 = SurrogateState::condition(scaled, hyp).unwrap();
        let cands: Vec<(Vec<f64>, usize)> = candidates(1, 300, CandidateScheme::LowDiscrepancy, &mut rng)
            .into_iter()
            .flat_map(|x| [(x.clone(), 0), (x, 1)])
            .collect();
        assert_eq!(argmax_acquisition(&s1, &cands, 1.0), argmax_acquisition(&s2, &cands, a));
    }
}
