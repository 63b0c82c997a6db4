//! Actor and critic networks with hand-written backpropagation.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::rng::Rng;

/// Fully connected network, tanh on hidden layers and identity on the output.
/// Weights are row-major `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Layer inputs and outputs kept for the backward pass.
pub(crate) struct Trace {
    /// `acts[0]` is the input, `acts[k]` the output of layer `k`.
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub(crate) fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty trace")
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        let weights = sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = sizes.windows(2).map(|w| vec![0.0; w[1]]).collect();
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    /// Gaussian init with standard deviation `gain / sqrt(fan_in)`; the last
    /// layer uses `out_gain` instead.
    pub fn init(sizes: &[usize], gain: f64, out_gain: f64, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(sizes);
        let layers = m.weights.len();
        for (k, w) in m.weights.iter_mut().enumerate() {
            let fan_in = sizes[k] as f64;
            let g = if k + 1 == layers { out_gain } else { gain };
            for x in w.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *x = z * g / fan_in.sqrt();
            }
        }
        m
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap_or(&0)
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let layers = self.weights.len();
        for k in 0..layers {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            let input = &acts[k];
            let w = &self.weights[k];
            let mut out = self.biases[k].clone();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(n_in)) {
                *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if k + 1 < layers {
                for o in out.iter_mut() {
                    *o = o.tanh();
                }
            }
            debug_assert_eq!(out.len(), n_out);
            acts.push(out);
        }
        Trace { acts }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).acts.pop().unwrap_or_default()
    }

    /// Accumulates `∂L/∂θ` into `grad` (flat, [`Mlp::write_flat`] layout)
    /// given `∂L/∂output`.
    pub(crate) fn backward(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.weights.len();
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for k in 0..layers {
            offsets.push(off);
            off += self.weights[k].len() + self.biases[k].len();
        }
        let mut delta = d_out.to_vec();
        for k in (0..layers).rev() {
            let n_in = self.sizes[k];
            if k + 1 < layers {
                // through tanh: d/dz = 1 − y²
                for (d, y) in delta.iter_mut().zip(&trace.acts[k + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let input = &trace.acts[k];
            let wlen = self.weights[k].len();
            let (gw, rest) = grad[offsets[k]..].split_at_mut(wlen);
            for (j, d) in delta.iter().enumerate() {
                let row = &mut gw[j * n_in..(j + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                rest[j] += d;
            }
            if k > 0 {
                let w = &self.weights[k];
                let mut prev = vec![0.0; n_in];
                for (j, d) in delta.iter().enumerate() {
                    for (p, wij) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *p += d * wij;
                    }
                }
                delta = prev;
            }
        }
    }

    /// Layer by layer: weights then biases.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
    }

    /// Reads parameters back from a [`Mlp::write_flat`] layout; returns the
    /// number consumed.
    pub fn read_flat(&mut self, src: &[f64]) -> usize {
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&src[i..i + nw]);
            i += nw;
            b.copy_from_slice(&src[i..i + nb]);
            i += nb;
        }
        i
    }
}

/// Diagonal Gaussian policy with a separate value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Actor layer sizes: observation, hidden..., action.
    pub layer_sizes: Vec<usize>,
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: Vec<f64>,
}

impl PolicyParams {
    pub fn new(obs_dim: usize, hidden: &[usize], action_dim: usize, init_log_std: f64, rng: &mut Rng) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let mut critic_sizes = sizes.clone();
        sizes.push(action_dim);
        critic_sizes.push(1);
        let actor = Mlp::init(&sizes, 1.0, 0.01, rng);
        let critic = Mlp::init(&critic_sizes, 1.0, 1.0, rng);
        Self {
            layer_sizes: sizes,
            actor,
            critic,
            log_std: vec![init_log_std; action_dim],
        }
    }

    pub fn zeros(obs_dim: usize, hidden: &[usize], action_dim: usize) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let mut critic_sizes = sizes.clone();
        sizes.push(action_dim);
        critic_sizes.push(1);
        Self {
            actor: Mlp::zeros(&sizes),
            critic: Mlp::zeros(&critic_sizes),
            layer_sizes: sizes,
            log_std: vec![0.0; action_dim],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let consistent = self.actor.sizes == self.layer_sizes
            && self.critic.input_dim() == self.obs_dim()
            && self.critic.output_dim() == 1
            && self.log_std.len() == self.action_dim()
            && [&self.actor, &self.critic].iter().all(|m| {
                m.sizes.iter().all(|&s| s > 0)
                    && m.weights.len() + 1 == m.sizes.len()
                    && m.sizes.windows(2).zip(&m.weights).all(|(w, wt)| wt.len() == w[0] * w[1])
                    && m.sizes.windows(2).zip(&m.biases).all(|(w, b)| b.len() == w[1])
            });
        if !consistent {
            return Err(PolicyError::Shape("inconsistent layer shapes"));
        }
        if self.flat().iter().any(|x| !x.is_finite()) {
            return Err(PolicyError::NonFinite);
        }
        Ok(())
    }

    /// Actor, critic, then `log_std`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        self.actor.write_flat(&mut v);
        self.critic.write_flat(&mut v);
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat(&mut self, src: &[f64]) {
        let a = self.actor.read_flat(src);
        let c = self.critic.read_flat(&src[a..]);
        let n = self.log_std.len();
        self.log_std.copy_from_slice(&src[a + c..a + c + n]);
    }

    pub fn param_count(&self) -> usize {
        self.actor.param_count() + self.critic.param_count() + self.log_std.len()
    }
}

/// Mean, standard deviation and value for one observation.
pub fn policy_forward(params: &PolicyParams, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64), PolicyError> {
    if obs.len() != params.obs_dim() {
        return Err(PolicyError::Shape("observation length does not match the input layer"));
    }
    let mean = params.actor.forward(obs);
    let std = params.log_std.iter().map(|l| l.exp()).collect();
    let value = params.critic.forward(obs)[0];
    Ok((mean, std, value))
}
