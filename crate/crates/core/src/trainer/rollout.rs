use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, to_env_action, Agent};
use crate::envs::{EnvSpec, Environment, EpisodeMetrics, EpisodeRecorder};
use crate::error::Result;
use crate::exploration::PerturbationMatrices;

/// One environment plus its exploration state.
pub struct EnvSlot {
    pub env: Box<dyn Environment>,
    pub obs: Vec<f64>,
    pub noise_rng: ChaCha8Rng,
    pub noise: Option<PerturbationMatrices>,
    pub step_in_episode: usize,
    pub episode_id: u64,
    recorder: EpisodeRecorder,
}

impl EnvSlot {
    pub fn new(spec: &EnvSpec, seed: u64) -> Result<Self> {
        let mut env = spec.build(seed)?;
        let obs = env.reset();
        let recorder = EpisodeRecorder::new(env.max_steps());
        Ok(Self {
            env,
            obs,
            noise_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)),
            noise: None,
            step_in_episode: 0,
            episode_id: 0,
            recorder,
        })
    }
}

/// Environments stepped in lockstep.
pub struct VecEnv {
    pub slots: Vec<EnvSlot>,
}

impl VecEnv {
    /// One environment per seed; equal seeds yield identical streams.
    pub fn new(spec: &EnvSpec, seeds: &[u64]) -> Result<Self> {
        let slots = seeds.iter().map(|&s| EnvSlot::new(spec, s)).collect::<Result<_>>()?;
        Ok(Self { slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Latent state `x` the action was drawn at.
    pub latent: Vec<f64>,
    /// Policy-space action (before clamping and rescaling).
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub entropy: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    /// Value of the final observation when the episode hit its time limit.
    pub truncated_value: Option<f64>,
    pub env_index: usize,
    pub episode_id: u64,
    pub step_in_episode: usize,
}

/// Time-major rollout storage: transition `t` of env `e` sits at `t · n_envs + e`.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub n_steps: usize,
    pub data: Vec<Transition>,
    /// Bootstrap values of the observation following the last step.
    pub last_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Episodes that finished during this rollout.
    pub episodes: Vec<EpisodeMetrics>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, t: usize, e: usize) -> &Transition {
        &self.data[t * self.n_envs + e]
    }

    pub fn mean_entropy(&self) -> f64 {
        if self.data.is_empty() {
            return f64::NAN;
        }
        self.data.iter().map(|d| d.entropy).sum::<f64>() / self.data.len() as f64
    }
}

/// Steps every environment `n_steps` times with exploratory actions.
pub fn collect_rollout(agent: &Agent, venv: &mut VecEnv, n_steps: usize) -> Result<RolloutBuffer> {
    let n_envs = venv.len();
    let mut buffer = RolloutBuffer {
        n_envs,
        n_steps,
        data: Vec::with_capacity(n_envs * n_steps),
        ..Default::default()
    };
    let std = agent.policy.effective_std(&agent.lattice).map(Arc::new);
    for _ in 0..n_steps {
        for (e, slot) in venv.slots.iter_mut().enumerate() {
            let fwd = agent.policy.forward_traced(&slot.obs)?;
            let action = agent.sample_action_with(
                &fwd,
                std.as_deref(),
                &mut slot.noise,
                slot.step_in_episode,
                &mut slot.noise_rng,
            )?;
            let latent = fwd.latent.as_slice().to_vec();
            let eval = agent
                .policy
                .evaluate_forward_with(fwd, action.as_slice(), &agent.lattice, std.clone())?;
            let value = agent.value.value(&slot.obs)?;
            let applied = to_env_action(&action, slot.env.action_bounds());
            let step = slot.env.step(&applied)?;
            slot.recorder.record(applied, &step);

            let truncated = step.done && slot.step_in_episode + 1 >= slot.env.max_steps();
            let truncated_value = if truncated { Some(agent.value.value(&step.obs)?) } else { None };
            buffer.data.push(Transition {
                obs: std::mem::take(&mut slot.obs),
                latent,
                action: action.as_slice().to_vec(),
                log_prob: eval.log_prob,
                entropy: eval.entropy,
                value,
                reward: step.reward,
                done: step.done,
                truncated_value,
                env_index: e,
                episode_id: slot.episode_id,
                step_in_episode: slot.step_in_episode,
            });

            if step.done {
                let recorder = std::mem::replace(&mut slot.recorder, EpisodeRecorder::new(slot.env.max_steps()));
                buffer.episodes.push(recorder.finish());
                slot.obs = slot.env.reset();
                slot.step_in_episode = 0;
                slot.episode_id += 1;
                if matches!(agent.lattice.period, crate::exploration::Period::Episode) {
                    slot.noise = None;
                }
            } else {
                slot.obs = step.obs;
                slot.step_in_episode += 1;
            }
        }
    }
    buffer.last_values = venv
        .slots
        .iter()
        .map(|s| agent.value.value(&s.obs))
        .collect::<Result<_>>()?;
    Ok(buffer)
}

/// Generalized advantage estimates and returns, written into `buffer`.
///
/// With `bootstrap_truncated`, a time-limit step's reward is augmented by
/// `γ V(s_T)` so truncation is not mistaken for failure.
pub fn compute_gae(buffer: &mut RolloutBuffer, gamma: f64, lambda: f64, bootstrap_truncated: bool) {
    let (n, m) = (buffer.n_steps, buffer.n_envs);
    buffer.advantages = vec![0.0; n * m];
    buffer.returns = vec![0.0; n * m];
    for e in 0..m {
        let mut last = 0.0;
        for t in (0..n).rev() {
            let d = &buffer.data[t * m + e];
            let next_value = if t + 1 == n {
                buffer.last_values[e]
            } else {
                buffer.data[(t + 1) * m + e].value
            };
            let live = if d.done { 0.0 } else { 1.0 };
            let mut reward = d.reward;
            if bootstrap_truncated {
                if let Some(v) = d.truncated_value {
                    reward += gamma * v;
                }
            }
            let delta = reward + gamma * next_value * live - d.value;
            last = delta + gamma * lambda * live * last;
            buffer.advantages[t * m + e] = last;
            buffer.returns[t * m + e] = last + d.value;
        }
    }
}
