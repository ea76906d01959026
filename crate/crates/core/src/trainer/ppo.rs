use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, RolloutBuffer};
use crate::config::PpoConfig;
use crate::error::{Error, Result};
use crate::policy::GradientTape;

/// Adam over one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n_params: usize, cfg: &PpoConfig) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update; `params` are visited in the same order as `grads`.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[f64], lr: f64) {
        assert_eq!(grads.len(), self.m.len(), "Adam: gradient length differs from state");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut i = 0;
        for slice in params {
            for p in slice.iter_mut() {
                let g = grads[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
                i += 1;
            }
        }
        assert_eq!(i, grads.len(), "Adam: parameter count differs from gradient length");
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Pre-clipping global gradient norm, averaged over minibatches.
    pub grad_norm: f64,
    pub n_minibatches: usize,
}

/// Clipped surrogate loss `−min(rA, clip(r)A)` and its derivative w.r.t. `log π`.
pub fn surrogate_and_ratio_grad(log_prob: f64, old_log_prob: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let ratio = (log_prob - old_log_prob).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (-unclipped, -unclipped)
    } else {
        (-clipped, 0.0)
    }
}

/// Several epochs of minibatch PPO on one rollout.
pub fn ppo_update(
    agent: &mut Agent,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    adam: &mut Adam,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    let n = buffer.len();
    if n == 0 {
        return Ok(UpdateStats::default());
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut tape = GradientTape::for_policy(&agent.policy);
    let mut value_grads = agent.value.zeroed();
    let mut stats = UpdateStats::default();
    let mut n_samples = 0usize;

    for epoch in 0..cfg.n_epochs {
        indices.shuffle(rng);
        for (mb_index, mb) in indices.chunks(cfg.batch_size).enumerate() {
            tape.zero();
            for s in value_grads.slices_mut() {
                s.fill(0.0);
            }
            let advantages = minibatch_advantages(buffer, mb, cfg.normalize_advantage);
            let inv = 1.0 / mb.len() as f64;
            let std = agent.policy.effective_std(&agent.lattice).map(Arc::new);
            let mut loss = 0.0;

            for (k, &i) in mb.iter().enumerate() {
                let d = &buffer.data[i];
                let fwd = agent.policy.forward_traced(&d.obs)?;
                let eval = agent
                    .policy
                    .evaluate_forward_with(fwd, &d.action, &agent.lattice, std.clone())?;
                let (pl, d_lp) = surrogate_and_ratio_grad(eval.log_prob, d.log_prob, advantages[k], cfg.clip_range);
                agent
                    .policy
                    .backward(&eval, &agent.lattice, d_lp * inv, -cfg.entropy_coef * inv, &mut tape);

                let (v, trace) = agent.value.value_traced(&d.obs)?;
                let err = v - buffer.returns[i];
                agent.value.backward(&trace, cfg.value_coef * 2.0 * err * inv, &mut value_grads);

                let vl = err * err;
                loss += inv * (pl - cfg.entropy_coef * eval.entropy + cfg.value_coef * vl);

                let log_ratio = eval.log_prob - d.log_prob;
                let ratio = log_ratio.exp();
                stats.policy_loss += pl;
                stats.value_loss += vl;
                stats.entropy += eval.entropy;
                stats.approx_kl += (ratio - 1.0) - log_ratio;
                stats.clip_fraction += f64::from(u8::from((ratio - 1.0).abs() > cfg.clip_range));
                n_samples += 1;
            }

            let mut grads = tape.to_flat();
            grads.extend(value_grads.to_flat());
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    minibatch: mb_index,
                });
            }
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            let scale = (cfg.max_grad_norm / (norm + 1e-6)).min(1.0);
            if scale < 1.0 {
                grads.iter_mut().for_each(|g| *g *= scale);
            }
            stats.grad_norm += norm;
            stats.n_minibatches += 1;

            let mut params = agent.policy.slices_mut();
            params.extend(agent.value.slices_mut());
            adam.step(params, &grads, cfg.learning_rate);
        }
    }

    let ns = n_samples as f64;
    stats.policy_loss /= ns;
    stats.value_loss /= ns;
    stats.entropy /= ns;
    stats.approx_kl /= ns;
    stats.clip_fraction /= ns;
    stats.grad_norm /= stats.n_minibatches as f64;
    Ok(stats)
}

fn minibatch_advantages(buffer: &RolloutBuffer, mb: &[usize], normalize: bool) -> Vec<f64> {
    let adv: Vec<f64> = mb.iter().map(|&i| buffer.advantages[i]).collect();
    if !normalize || adv.len() < 2 {
        return adv;
    }
    let mean = adv.iter().sum::<f64>() / adv.len() as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (adv.len() - 1) as f64;
    let sd = var.sqrt() + 1e-8;
    adv.iter().map(|a| (a - mean) / sd).collect()
}
