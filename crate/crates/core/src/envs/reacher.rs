use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, group_drive, Environment, StepResult};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReacherParams {
    /// Opposing actuator pairs per axis; the action has `4 · n_pairs` entries.
    pub n_pairs: usize,
    pub gain: f64,
    pub dt: f64,
    pub max_steps: usize,
    /// Distance to target below which a step counts as solved.
    pub solved_threshold: f64,
    /// Targets are drawn uniformly from the square `[-r, r]²`.
    pub target_range: f64,
    pub pose_weight: f64,
    pub solved_weight: f64,
    pub velocity_obs_scale: f64,
}

impl Default for ReacherParams {
    fn default() -> Self {
        Self {
            n_pairs: 2,
            gain: 50.0,
            dt: 0.02,
            max_steps: 100,
            solved_threshold: 0.175,
            target_range: 1.0,
            pose_weight: 1.0,
            solved_weight: 1.0,
            velocity_obs_scale: 0.1,
        }
    }
}

/// Planar point mass, each axis driven by `k` positive and `k` negative actuators.
///
/// Action layout: `[+x (k), −x (k), +y (k), −y (k)]`.
#[derive(Clone, Debug)]
pub struct RedundantReacher {
    params: ReacherParams,
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub target: [f64; 2],
    steps: usize,
    rng: ChaCha8Rng,
}

impl RedundantReacher {
    pub fn new(params: ReacherParams, seed: u64) -> Result<Self> {
        if params.n_pairs == 0 {
            return Err(Error::Config("reacher needs at least one actuator pair per axis".into()));
        }
        if !(params.dt > 0.0) || params.max_steps == 0 {
            return Err(Error::Config("reacher needs dt > 0 and max_steps > 0".into()));
        }
        let mut env = Self {
            params,
            pos: [0.0; 2],
            vel: [0.0; 2],
            target: [0.0; 2],
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset();
        Ok(env)
    }

    pub fn acceleration(&self, action: &[f64]) -> [f64; 2] {
        let k = self.params.n_pairs;
        let ax = group_drive(action, 0..k) - group_drive(action, k..2 * k);
        let ay = group_drive(action, 2 * k..3 * k) - group_drive(action, 3 * k..4 * k);
        [self.params.gain * ax, self.params.gain * ay]
    }

    fn distance(&self) -> f64 {
        (self.target[0] - self.pos[0]).hypot(self.target[1] - self.pos[1])
    }
}

impl Environment for RedundantReacher {
    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        4 * self.params.n_pairs
    }

    fn max_steps(&self) -> usize {
        self.params.max_steps
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn reset(&mut self) -> Vec<f64> {
        let r = self.params.target_range;
        for t in &mut self.target {
            *t = if r > 0.0 { self.rng.random_range(-r..=r) } else { 0.0 };
        }
        self.pos = [0.0; 2];
        self.vel = [0.0; 2];
        self.steps = 0;
        self.observe()
    }

    fn observe(&self) -> Vec<f64> {
        let s = self.params.velocity_obs_scale;
        vec![
            self.target[0] - self.pos[0],
            self.target[1] - self.pos[1],
            self.vel[0] * s,
            self.vel[1] * s,
        ]
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_action(action, self.action_dim())?;
        let acc = self.acceleration(action);
        for d in 0..2 {
            self.vel[d] += acc[d] * self.params.dt;
            self.pos[d] += self.vel[d] * self.params.dt;
        }
        self.steps += 1;
        let dist = self.distance();
        let solved = dist < self.params.solved_threshold;
        let reward = -self.params.pose_weight * dist + if solved { self.params.solved_weight } else { 0.0 };
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.steps >= self.params.max_steps,
            solved,
        })
    }

    fn positions(&self) -> Vec<f64> {
        self.pos.to_vec()
    }

    fn velocities(&self) -> Vec<f64> {
        self.vel.to_vec()
    }

    fn snapshot(&self) -> Option<Vec<f64>> {
        Some(vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.target[0],
            self.target[1],
            self.steps as f64,
        ])
    }

    fn restore(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != 7 {
            return Err(Error::dims("reacher restore", 7, state.len()));
        }
        self.pos = [state[0], state[1]];
        self.vel = [state[2], state[3]];
        self.target = [state[4], state[5]];
        self.steps = state[6] as usize;
        Ok(())
    }

    fn actuator_groups(&self) -> Vec<Vec<usize>> {
        let k = self.params.n_pairs;
        (0..4).map(|g| (g * k..(g + 1) * k).collect()).collect()
    }
}
