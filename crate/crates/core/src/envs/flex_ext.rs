use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, group_drive, Environment, StepResult};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlexExtParams {
    pub n_flexors: usize,
    pub n_extensors: usize,
    /// Activation-to-acceleration gain (rad/s²).
    pub gain: f64,
    pub dt: f64,
    pub max_steps: usize,
    /// `|Δθ|` below which a step counts as solved (rad).
    pub solved_threshold: f64,
    /// Targets are drawn uniformly from `[-target_range, target_range]`.
    pub target_range: f64,
    /// Initial angles are drawn uniformly from `[-init_range, init_range]`.
    pub init_range: f64,
    pub pose_weight: f64,
    pub solved_weight: f64,
    /// Multiplier applied to `θ̇` in the observation.
    pub velocity_obs_scale: f64,
}

impl Default for FlexExtParams {
    fn default() -> Self {
        Self {
            n_flexors: 1,
            n_extensors: 1,
            gain: 50.0,
            dt: 0.02,
            max_steps: 100,
            solved_threshold: 0.175,
            target_range: 1.0,
            init_range: 0.0,
            pose_weight: 1.0,
            solved_weight: 1.0,
            velocity_obs_scale: 0.1,
        }
    }
}

impl FlexExtParams {
    pub fn elbow() -> Self {
        Self {
            n_flexors: 3,
            n_extensors: 3,
            ..Self::default()
        }
    }
}

/// Single joint driven by a flexor group and an extensor group.
///
/// `θ̈ = gain · (ā_e − ā_f)`, integrated with semi-implicit Euler. Actions are
/// ordered flexors first, then extensors.
#[derive(Clone, Debug)]
pub struct FlexExtArm {
    params: FlexExtParams,
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_target: f64,
    steps: usize,
    last_acceleration: f64,
    rng: ChaCha8Rng,
}

impl FlexExtArm {
    pub fn new(params: FlexExtParams, seed: u64) -> Result<Self> {
        if params.n_flexors == 0 || params.n_extensors == 0 {
            return Err(Error::Config("flex-ext arm needs at least one flexor and one extensor".into()));
        }
        if !(params.dt > 0.0) || params.max_steps == 0 {
            return Err(Error::Config("flex-ext arm needs dt > 0 and max_steps > 0".into()));
        }
        let mut env = Self {
            params,
            theta: 0.0,
            theta_dot: 0.0,
            theta_target: 0.0,
            steps: 0,
            last_acceleration: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset();
        Ok(env)
    }

    pub fn params(&self) -> &FlexExtParams {
        &self.params
    }

    /// `Δθ = θ_target − θ`.
    pub fn delta_theta(&self) -> f64 {
        self.theta_target - self.theta
    }

    /// Angular acceleration applied by the most recent step.
    pub fn last_acceleration(&self) -> f64 {
        self.last_acceleration
    }

    /// Acceleration the given activations would produce.
    pub fn acceleration(&self, action: &[f64]) -> f64 {
        let nf = self.params.n_flexors;
        let ne = self.params.n_extensors;
        let flex = group_drive(action, 0..nf);
        let ext = group_drive(action, nf..nf + ne);
        self.params.gain * (ext - flex)
    }

    /// Interval containing every per-step reward for activations in `[0, 1]`.
    pub fn reward_bounds(&self) -> (f64, f64) {
        let p = &self.params;
        let n = p.max_steps as f64;
        // |Δθ| grows by at most gain·dt²·n(n+1)/2 over an episode
        let drift = p.gain * p.dt * p.dt * n * (n + 1.0) / 2.0;
        let max_delta = p.target_range + p.init_range + drift;
        let lo = -p.pose_weight.abs() * max_delta - p.solved_weight.abs();
        let hi = p.solved_weight.abs();
        (lo, hi)
    }

    pub fn set_target(&mut self, target: f64) {
        self.theta_target = target;
    }
}

/// `a_e = 0.5 + Δθ`, `a_f = 0.5 − Δθ`, clamped to `[0, 1]`. Returns `(a_e, a_f)`.
pub fn linear_ideal_policy(delta_theta: f64) -> (f64, f64) {
    (
        (0.5 + delta_theta).clamp(0.0, 1.0),
        (0.5 - delta_theta).clamp(0.0, 1.0),
    )
}

impl Environment for FlexExtArm {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        self.params.n_flexors + self.params.n_extensors
    }

    fn max_steps(&self) -> usize {
        self.params.max_steps
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn reset(&mut self) -> Vec<f64> {
        let tr = self.params.target_range;
        let ir = self.params.init_range;
        self.theta_target = if tr > 0.0 { self.rng.random_range(-tr..=tr) } else { 0.0 };
        self.theta = if ir > 0.0 { self.rng.random_range(-ir..=ir) } else { 0.0 };
        self.theta_dot = 0.0;
        self.steps = 0;
        self.last_acceleration = 0.0;
        self.observe()
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.delta_theta(), self.theta_dot * self.params.velocity_obs_scale]
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_action(action, self.action_dim())?;
        let acc = self.acceleration(action);
        self.theta_dot += acc * self.params.dt;
        self.theta += self.theta_dot * self.params.dt;
        self.last_acceleration = acc;
        self.steps += 1;

        let err = self.delta_theta().abs();
        let solved = err < self.params.solved_threshold;
        let reward = -self.params.pose_weight * err + if solved { self.params.solved_weight } else { 0.0 };
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.steps >= self.params.max_steps,
            solved,
        })
    }

    fn positions(&self) -> Vec<f64> {
        vec![self.theta]
    }

    fn velocities(&self) -> Vec<f64> {
        vec![self.theta_dot]
    }

    fn snapshot(&self) -> Option<Vec<f64>> {
        Some(vec![self.theta, self.theta_dot, self.theta_target, self.steps as f64])
    }

    fn restore(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != 4 {
            return Err(Error::dims("flex-ext restore", 4, state.len()));
        }
        self.theta = state[0];
        self.theta_dot = state[1];
        self.theta_target = state[2];
        self.steps = state[3] as usize;
        Ok(())
    }

    fn actuator_groups(&self) -> Vec<Vec<usize>> {
        let nf = self.params.n_flexors;
        vec![(0..nf).collect(), (nf..nf + self.params.n_extensors).collect()]
    }
}
