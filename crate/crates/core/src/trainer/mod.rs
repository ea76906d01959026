//! PPO training with pluggable exploration.

mod checkpoint;
mod curve;
mod ppo;
mod rollout;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use curve::{read_curve_csv, write_curve_csv, CurveRow, CURVE_HEADER};
pub use ppo::{ppo_update, surrogate_and_ratio_grad, Adam, UpdateStats};
pub use rollout::{collect_rollout, compute_gae, EnvSlot, RolloutBuffer, Transition, VecEnv};

use std::time::Instant;

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{effective_lattice, NetworkConfig, RunConfig, Strategy};
use crate::envs::{EnvSpec, EpisodeMetrics, EpisodeRecorder};
use crate::error::{Error, Result};
use crate::exploration::{self, EffectiveStd, LatticeConfig, PerturbationMatrices};
use crate::policy::{MlpPolicy, NoiseParams, PolicyForward, PolicyLayout, ValueNet};

/// Independent seed for a named stream derived from a run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_EVAL: u64 = 2;
const STREAM_ENV_BASE: u64 = 1000;

/// Actor, critic and the exploration settings they were trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub policy: MlpPolicy,
    pub value: ValueNet,
    pub strategy: Strategy,
    /// Effective exploration settings (`α = 0` for gSDE).
    pub lattice: LatticeConfig,
}

impl Agent {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        network: &NetworkConfig,
        strategy: Strategy,
        lattice: &LatticeConfig,
        seed: u64,
    ) -> Self {
        let layout = PolicyLayout {
            obs_dim,
            hidden: network.policy_hidden.clone(),
            action_dim,
            activation: network.activation,
            noise_matrices: match strategy {
                Strategy::Diagonal => None,
                Strategy::Gsde | Strategy::Lattice => Some(lattice.full_std),
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_INIT));
        let policy = MlpPolicy::new(&layout, lattice.init_log_std, &mut rng);
        let value = ValueNet::new(obs_dim, &network.value_hidden, network.activation, &mut rng);
        Self {
            policy,
            value,
            strategy,
            lattice: effective_lattice(strategy, lattice),
        }
    }

    pub fn for_env(cfg: &RunConfig, env: &dyn crate::envs::Environment) -> Self {
        Self::new(
            env.obs_dim(),
            env.action_dim(),
            &cfg.network,
            cfg.strategy,
            &cfg.lattice,
            cfg.seed,
        )
    }

    /// Draws an exploratory action in policy space.
    ///
    /// Matrix-based strategies redraw their perturbations when the period is
    /// due at `step_in_episode`; independent noise is fresh every call.
    pub fn sample_action(
        &self,
        fwd: &PolicyForward,
        noise: &mut Option<PerturbationMatrices>,
        step_in_episode: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<DVector<f64>> {
        let std = self.policy.effective_std(&self.lattice);
        self.sample_action_with(fwd, std.as_ref(), noise, step_in_episode, rng)
    }

    /// As [`sample_action`](Self::sample_action) with precomputed std matrices.
    pub fn sample_action_with(
        &self,
        fwd: &PolicyForward,
        std: Option<&EffectiveStd>,
        noise: &mut Option<PerturbationMatrices>,
        step_in_episode: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<DVector<f64>> {
        match std {
            None => {
                let sigma = match &self.policy.noise {
                    NoiseParams::Diagonal { log_std } => log_std.map(f64::exp),
                    NoiseParams::Matrices(_) => {
                        return Err(Error::Config("noise matrices present but no std supplied".into()))
                    }
                };
                Ok(exploration::independent_action_noise(&fwd.mean, &sigma, rng))
            }
            Some(std) => {
                let due = self.lattice.period.resample_due(step_in_episode) || noise.is_none();
                if due {
                    *noise = Some(exploration::resample_perturbations(
                        &std.sample_x,
                        &std.sample_a,
                        self.lattice.alpha != 0.0,
                        rng,
                    ));
                } else if let Some(p) = noise.as_mut() {
                    p.age += 1;
                }
                let p = noise.as_ref().expect("perturbations drawn above");
                let a = exploration::perturbed_action(&fwd.latent, &self.policy.head.weight, p, self.lattice.alpha)?;
                Ok(a + &self.policy.head.bias)
            }
        }
    }
}

/// Maps a policy-space action to actuator activations.
///
/// Policy actions are normalized: `[-1, 1]` covers the actuator range, and
/// values outside it are clamped.
pub fn to_env_action(action: &DVector<f64>, bounds: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = bounds;
    action
        .iter()
        .map(|u| lo + (u.clamp(-1.0, 1.0) + 1.0) * 0.5 * (hi - lo))
        .collect()
}

/// Runs `n_episodes` and returns per-episode metrics.
pub fn evaluate_agent(
    agent: &Agent,
    env_spec: &EnvSpec,
    n_episodes: usize,
    deterministic: bool,
    seed: u64,
) -> Result<Vec<EpisodeMetrics>> {
    let mut env = env_spec.build(derive_seed(seed, STREAM_EVAL))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_EVAL + 1));
    let bounds = env.action_bounds();
    let std = agent.policy.effective_std(&agent.lattice);
    let mut out = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut obs = env.reset();
        let mut rec = EpisodeRecorder::new(env.max_steps());
        let mut noise = None;
        for t in 0.. {
            let fwd = agent.policy.forward_traced(&obs)?;
            let a = if deterministic {
                fwd.mean.clone()
            } else {
                agent.sample_action_with(&fwd, std.as_ref(), &mut noise, t, &mut rng)?
            };
            let applied = to_env_action(&a, bounds);
            let step = env.step(&applied)?;
            rec.record(applied, &step);
            obs = step.obs;
            if step.done {
                break;
            }
        }
        out.push(rec.finish());
    }
    Ok(out)
}

/// Mean and standard error of the mean.
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// PPO driver: owns the agent, environments and optimizer state.
pub struct Trainer {
    pub cfg: RunConfig,
    pub agent: Agent,
    pub venv: VecEnv,
    pub adam: Adam,
    shuffle_rng: ChaCha8Rng,
    pub update: usize,
    pub env_steps: usize,
    started: Instant,
    pub last_stats: Option<UpdateStats>,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let seeds: Vec<u64> = (0..cfg.n_envs as u64)
            .map(|e| derive_seed(cfg.seed, STREAM_ENV_BASE + e))
            .collect();
        let venv = VecEnv::new(&cfg.env, &seeds)?;
        let agent = Agent::for_env(&cfg, venv.slots[0].env.as_ref());
        let n_params = agent.policy.parameter_count() + agent.value.to_flat().len();
        let adam = Adam::new(n_params, &cfg.ppo);
        let shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_SHUFFLE));
        Ok(Self {
            cfg,
            agent,
            venv,
            adam,
            shuffle_rng,
            update: 0,
            env_steps: 0,
            started: Instant::now(),
            last_stats: None,
        })
    }

    /// Continues from a checkpointed agent; optimizer moments start fresh.
    pub fn from_agent(cfg: RunConfig, agent: Agent) -> Result<Self> {
        let mut t = Self::new(cfg)?;
        t.agent = agent;
        Ok(t)
    }

    pub fn is_done(&self) -> bool {
        self.env_steps >= self.cfg.total_env_steps
    }

    /// One rollout followed by one PPO update.
    pub fn step(&mut self) -> Result<CurveRow> {
        let mut buffer = collect_rollout(&self.agent, &mut self.venv, self.cfg.ppo.n_steps)?;
        compute_gae(&mut buffer, self.cfg.ppo.gamma, self.cfg.ppo.gae_lambda, self.cfg.ppo.bootstrap_truncated);
        let stats = ppo_update(&mut self.agent, &buffer, &self.cfg.ppo, &mut self.adam, &mut self.shuffle_rng)?;
        self.update += 1;
        self.env_steps += buffer.len();

        let (reward, solved, energy) = if buffer.episodes.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let n = buffer.episodes.len() as f64;
            (
                buffer.episodes.iter().map(|e| e.cumulative_reward).sum::<f64>() / n,
                buffer.episodes.iter().map(|e| e.solved_fraction).sum::<f64>() / n,
                buffer.episodes.iter().map(|e| e.energy).sum::<f64>() / n,
            )
        };
        let row = CurveRow {
            update: self.update,
            env_steps: self.env_steps,
            mean_episode_reward: reward,
            solved_fraction: solved,
            energy,
            mean_entropy: buffer.mean_entropy(),
            wall_time_s: if self.cfg.log_wall_time {
                self.started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        self.last_stats = Some(stats);
        Ok(row)
    }

    /// Trains until `total_env_steps`, calling `on_update` after every update.
    pub fn run(&mut self, mut on_update: impl FnMut(&Trainer, &CurveRow) -> Result<()>) -> Result<Vec<CurveRow>> {
        let mut rows = Vec::new();
        while !self.is_done() {
            let row = self.step()?;
            on_update(self, &row)?;
            rows.push(row);
        }
        Ok(rows)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.agent, &self.cfg, self.update, self.env_steps)
    }
}
