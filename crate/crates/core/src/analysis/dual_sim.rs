use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::stats::{variance, wilcoxon_signed_rank, WilcoxonResult};
use crate::envs::{linear_ideal_policy, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::exploration;
use crate::trainer::{derive_seed, Agent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Noise injected upstream of the output layer.
    Latent,
    /// Independent Gaussian noise added to each actuator command.
    Action,
}

/// A controller that can act noise-free or with latent-space noise.
///
/// Commands are activations before clamping; the environment clamps.
pub trait NoisyController {
    fn action_dim(&self) -> usize;
    fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>>;
    fn latent_noisy_action(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

/// The linear flexor-extensor controller `a_e = 0.5 + Δθ`, `a_f = 0.5 − Δθ`,
/// whose single latent variable is `Δθ`.
#[derive(Clone, Debug)]
pub struct IdealLinearController {
    pub n_flexors: usize,
    pub n_extensors: usize,
    /// Std of the noise added to `Δθ` in latent mode.
    pub sigma: f64,
}

impl IdealLinearController {
    fn command(&self, delta_theta: f64) -> Vec<f64> {
        let (a_e, a_f) = linear_ideal_policy(delta_theta);
        let mut a = vec![a_f; self.n_flexors];
        a.extend(std::iter::repeat_n(a_e, self.n_extensors));
        a
    }
}

impl NoisyController for IdealLinearController {
    fn action_dim(&self) -> usize {
        self.n_flexors + self.n_extensors
    }

    fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.command(obs[0]))
    }

    fn latent_noisy_action(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let eps: f64 = rng.sample(StandardNormal);
        Ok(self.command(obs[0] + self.sigma * eps))
    }
}

/// A trained agent; latent noise is `α W P_x x` with `P_x` redrawn each step.
pub struct AgentController<'a> {
    pub agent: &'a Agent,
    pub bounds: (f64, f64),
}

impl AgentController<'_> {
    fn to_command(&self, u: &DVector<f64>) -> Vec<f64> {
        let (lo, hi) = self.bounds;
        u.iter().map(|v| lo + (v + 1.0) * 0.5 * (hi - lo)).collect()
    }
}

impl NoisyController for AgentController<'_> {
    fn action_dim(&self) -> usize {
        self.agent.policy.action_dim()
    }

    fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let (_, mean) = self.agent.policy.forward(obs)?;
        Ok(self.to_command(&mean))
    }

    fn latent_noisy_action(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let std = self
            .agent
            .policy
            .effective_std(&self.agent.lattice)
            .ok_or_else(|| Error::Config("latent noise needs a policy with noise matrices".into()))?;
        let (x, mean) = self.agent.policy.forward(obs)?;
        let p = exploration::resample_perturbations(&std.sample_x, &std.sample_a, true, rng);
        let noise = &self.agent.policy.head.weight * exploration::latent_noise(&x, &p, self.agent.lattice.alpha);
        Ok(self.to_command(&(mean + noise)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSimResult {
    pub mode: NoiseMode,
    pub n_steps: usize,
    /// Noisy minus noise-free first generalized coordinate after each step.
    pub angle_deviation: Vec<f64>,
    /// Noisy minus noise-free acceleration of the first coordinate.
    pub accel_deviation: Vec<f64>,
    /// Per-action noise std requested for action mode (empty in latent mode).
    pub sigma_match: Vec<f64>,
    /// Per-action std of the command deviations actually injected.
    pub injected_std: Vec<f64>,
}

/// Paired noisy / noise-free simulation, re-synchronized after every step.
///
/// From each state the noise-free command and the noisy command are both
/// applied; the simulator then continues from the noisy outcome.
pub fn dual_sim_experiment(
    env: &mut dyn Environment,
    ctrl: &dyn NoisyController,
    mode: NoiseMode,
    sigma_match: &[f64],
    n_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DualSimResult> {
    env.snapshot().ok_or(Error::StateSyncUnsupported)?;
    let n_a = ctrl.action_dim();
    if mode == NoiseMode::Action && sigma_match.len() != n_a {
        return Err(Error::dims("dual_sim: sigma_match", n_a, sigma_match.len()));
    }
    let dt = env.dt();
    let mut obs = env.reset();
    let mut angle = Vec::with_capacity(n_steps);
    let mut accel = Vec::with_capacity(n_steps);
    let mut injected: Vec<Vec<f64>> = vec![Vec::with_capacity(n_steps); n_a];

    for _ in 0..n_steps {
        let snap = env.snapshot().ok_or(Error::StateSyncUnsupported)?;
        let mean = ctrl.mean_action(&obs)?;
        let noisy = match mode {
            NoiseMode::Latent => ctrl.latent_noisy_action(&obs, rng)?,
            NoiseMode::Action => mean
                .iter()
                .zip(sigma_match)
                .map(|(m, s)| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + s * z
                })
                .collect(),
        };
        for (k, (n, m)) in noisy.iter().zip(&mean).enumerate() {
            injected[k].push(n - m);
        }

        env.step(&mean)?;
        let (pos_ref, vel_ref) = (env.positions()[0], env.velocities()[0]);
        env.restore(&snap)?;
        let step = env.step(&noisy)?;
        let (pos, vel) = (env.positions()[0], env.velocities()[0]);
        angle.push(pos - pos_ref);
        accel.push((vel - vel_ref) / dt);
        obs = if step.done { env.reset() } else { step.obs };
    }

    Ok(DualSimResult {
        mode,
        n_steps,
        angle_deviation: angle,
        accel_deviation: accel,
        sigma_match: if mode == NoiseMode::Action { sigma_match.to_vec() } else { Vec::new() },
        injected_std: injected.iter().map(|v| variance(v).sqrt()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedDualSim {
    pub latent: DualSimResult,
    pub action: DualSimResult,
    /// `V[θ̈ deviation]` latent over action.
    pub accel_variance_ratio: f64,
    pub angle_variance_ratio: f64,
    /// Signed-rank test on paired absolute angle deviations (latent vs action).
    pub wilcoxon: WilcoxonResult,
}

/// Latent-noise run first; its measured per-action std then drives the
/// action-noise run. Both runs start from identically seeded environments.
pub fn matched_dual_sim(
    spec: &EnvSpec,
    ctrl: &dyn NoisyController,
    n_steps: usize,
    seed: u64,
) -> Result<MatchedDualSim> {
    let env_seed = derive_seed(seed, 12);
    let mut env = spec.build(env_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 10));
    let latent = dual_sim_experiment(env.as_mut(), ctrl, NoiseMode::Latent, &[], n_steps, &mut rng)?;

    let mut env = spec.build(env_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 11));
    let sigma = latent.injected_std.clone();
    let action = dual_sim_experiment(env.as_mut(), ctrl, NoiseMode::Action, &sigma, n_steps, &mut rng)?;

    let abs = |v: &[f64]| v.iter().map(|d| d.abs()).collect::<Vec<_>>();
    let wilcoxon = wilcoxon_signed_rank(&abs(&latent.angle_deviation), &abs(&action.angle_deviation))?;
    Ok(MatchedDualSim {
        accel_variance_ratio: variance(&latent.accel_deviation) / variance(&action.accel_deviation),
        angle_variance_ratio: variance(&latent.angle_deviation) / variance(&action.angle_deviation),
        latent,
        action,
        wilcoxon,
    })
}
