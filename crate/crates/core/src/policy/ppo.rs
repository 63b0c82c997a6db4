//! Clipped-surrogate PPO loss, its analytic gradient, and the update loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::PolicyParams;
use super::{gae, gaussian_log_prob, PPOConfig, PolicyError, RolloutBuffer};
use crate::rng::Rng;

/// `0.5·ln(2πe)`, the per-dimension entropy of a unit Gaussian.
const HALF_LN_2PI_E: f64 = 1.418_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    /// Negative mean clipped surrogate.
    pub policy: f64,
    /// Mean squared value error.
    pub value: f64,
    pub entropy: f64,
    /// `policy + vf_coef·value − ent_coef·entropy`.
    pub total: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Loss over a minibatch and its gradient in the [`PolicyParams::flat`]
/// layout. `idx` selects rows of the aligned slices.
#[allow(clippy::too_many_arguments)]
pub fn ppo_loss(
    params: &PolicyParams,
    obs: &[Vec<f64>],
    actions: &[Vec<f64>],
    old_log_probs: &[f64],
    advantages: &[f64],
    returns: &[f64],
    idx: &[usize],
    cfg: &PPOConfig,
) -> (LossParts, Vec<f64>) {
    let n = idx.len().max(1) as f64;
    let n_actor = params.actor.param_count();
    let n_critic = params.critic.param_count();
    let a_dim = params.action_dim();
    let mut grad = vec![0.0; params.param_count()];
    let (g_actor, rest) = grad.split_at_mut(n_actor);
    let (g_critic, g_log_std) = rest.split_at_mut(n_critic);
    let std: Vec<f64> = params.log_std.iter().map(|l| l.exp()).collect();
    let eps = cfg.clip_epsilon;

    let mut parts = LossParts::default();
    let mut d_mean = vec![0.0; a_dim];
    for &i in idx {
        let (o, a, adv) = (&obs[i], &actions[i], advantages[i]);
        let at = params.actor.trace(o);
        let mean = at.output();
        let logp = gaussian_log_prob(a, mean, &params.log_std);
        let log_ratio = logp - old_log_probs[i];
        let r = log_ratio.exp();
        let rc = r.clamp(1.0 - eps, 1.0 + eps);
        let unclipped = r * adv <= rc * adv;
        parts.policy -= if unclipped { r * adv } else { rc * adv };
        if rc != r {
            parts.clip_fraction += 1.0;
        }
        parts.approx_kl += (r - 1.0) - log_ratio;
        if unclipped {
            // ∂(−r·A)/∂logp = −r·A
            let g = -r * adv / n;
            for j in 0..a_dim {
                let z = (a[j] - mean[j]) / std[j];
                d_mean[j] = g * z / std[j];
                g_log_std[j] += g * (z * z - 1.0);
            }
            params.actor.backward(&at, &d_mean, g_actor);
        }

        let ct = params.critic.trace(o);
        let err = ct.output()[0] - returns[i];
        parts.value += err * err;
        params.critic.backward(&ct, &[2.0 * cfg.vf_coef * err / n], g_critic);
    }
    parts.policy /= n;
    parts.value /= n;
    parts.clip_fraction /= n;
    parts.approx_kl /= n;
    parts.entropy = params.log_std.iter().map(|l| l + HALF_LN_2PI_E).sum();
    for g in g_log_std.iter_mut() {
        *g -= cfg.ent_coef;
    }
    parts.total = parts.policy + cfg.vf_coef * parts.value - cfg.ent_coef * parts.entropy;
    (parts, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let b2t = 1.0 - self.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        for (((x, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *x -= lr * (*m / b1t) / ((*v / b2t).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Loss parts averaged over minibatches.
    pub loss: LossParts,
    /// The update hit a non-finite loss and was rolled back.
    pub aborted: bool,
}

/// Several epochs of minibatch Adam steps on the clipped-surrogate loss.
///
/// Advantages are normalized to mean 0 and std 1 over the buffer, and the
/// global gradient norm is clipped to `max_grad_norm`. A non-finite loss or
/// gradient restores the parameters from before the update.
pub fn ppo_update(
    params: &mut PolicyParams,
    buffer: &RolloutBuffer,
    cfg: &PPOConfig,
    adam: &mut Adam,
    rng: &mut Rng,
) -> Result<UpdateStats, PolicyError> {
    buffer.validate()?;
    let n = buffer.len();
    if n == 0 {
        return Ok(UpdateStats::default());
    }
    let (mut adv, returns) = gae(&buffer.rewards, &buffer.values, &buffer.dones, cfg.gamma, cfg.gae_lambda);
    normalize(&mut adv);

    let saved_params = params.clone();
    let saved_adam = adam.clone();
    let mut theta = params.flat();
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut batches = 0.0;
    for _ in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let (parts, mut grad) = ppo_loss(
                params,
                &buffer.observations,
                &buffer.actions,
                &buffer.log_probs,
                &adv,
                &returns,
                chunk,
                cfg,
            );
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !parts.total.is_finite() || !norm.is_finite() {
                log::warn!("non-finite PPO loss; update rolled back");
                *params = saved_params;
                *adam = saved_adam;
                return Ok(UpdateStats {
                    aborted: true,
                    ..UpdateStats::default()
                });
            }
            if norm > cfg.max_grad_norm {
                let s = cfg.max_grad_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            adam.step(&mut theta, &grad, cfg.learning_rate);
            params.set_flat(&theta);
            accumulate(&mut stats.loss, &parts);
            batches += 1.0;
        }
    }
    for x in [
        &mut stats.loss.policy,
        &mut stats.loss.value,
        &mut stats.loss.entropy,
        &mut stats.loss.total,
        &mut stats.loss.clip_fraction,
        &mut stats.loss.approx_kl,
    ] {
        *x /= batches;
    }
    if params.validate().is_err() {
        log::warn!("non-finite parameters after PPO update; rolled back");
        *params = saved_params;
        *adam = saved_adam;
        stats.aborted = true;
    }
    Ok(stats)
}

fn accumulate(acc: &mut LossParts, p: &LossParts) {
    acc.policy += p.policy;
    acc.value += p.value;
    acc.entropy += p.entropy;
    acc.total += p.total;
    acc.clip_fraction += p.clip_fraction;
    acc.approx_kl += p.approx_kl;
}

fn normalize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-8);
    x.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}
