//! Overactuated toy environments.
//!
//! Actuators come in antagonist groups; each group's drive is the mean of its
//! (clamped) activations, so a system with many actuators per group reduces
//! exactly to the single-pair system when all members agree.

mod flex_ext;
mod reacher;

pub use flex_ext::{linear_ideal_policy, FlexExtArm, FlexExtParams};
pub use reacher::{RedundantReacher, ReacherParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub solved: bool,
}

pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Activation bounds shared by all actuators.
    fn action_bounds(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn max_steps(&self) -> usize;
    fn dt(&self) -> f64;

    /// Starts a new episode and returns the first observation.
    fn reset(&mut self) -> Vec<f64>;
    fn observe(&self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Generalized coordinates (joint angle, point position).
    fn positions(&self) -> Vec<f64>;
    fn velocities(&self) -> Vec<f64>;

    /// Full simulator state, for synchronized twin simulations.
    fn snapshot(&self) -> Option<Vec<f64>> {
        None
    }

    fn restore(&mut self, _state: &[f64]) -> Result<()> {
        Err(Error::StateSyncUnsupported)
    }

    /// Actuator index groups, e.g. flexors and extensors.
    fn actuator_groups(&self) -> Vec<Vec<usize>>;
}

/// Environment selection as it appears in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum EnvSpec {
    #[serde(alias = "elbow")]
    FlexExt(FlexExtParams),
    Reacher(ReacherParams),
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::FlexExt(FlexExtParams::default())
    }
}

impl EnvSpec {
    pub fn build(&self, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvSpec::FlexExt(p) => Box::new(FlexExtArm::new(p.clone(), seed)?),
            EnvSpec::Reacher(p) => Box::new(RedundantReacher::new(p.clone(), seed)?),
        })
    }
}

pub(crate) fn check_action(action: &[f64], expected: usize) -> Result<()> {
    if action.len() != expected {
        return Err(Error::dims("environment step: action", expected, action.len()));
    }
    if let Some(index) = action.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFiniteAction { index });
    }
    Ok(())
}

/// Mean of clamped activations over `group`.
pub(crate) fn group_drive(action: &[f64], group: std::ops::Range<usize>) -> f64 {
    let n = group.len() as f64;
    group.map(|i| action[i].clamp(0.0, 1.0)).sum::<f64>() / n
}

/// Mean over steps of the mean squared activation per actuator.
pub fn energy_of(actions: &[Vec<f64>]) -> f64 {
    if actions.is_empty() {
        return 0.0;
    }
    let per_step = actions.iter().map(|a| {
        if a.is_empty() {
            0.0
        } else {
            a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64
        }
    });
    per_step.sum::<f64>() / actions.len() as f64
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub cumulative_reward: f64,
    /// Solved steps divided by the maximum episode length.
    pub solved_fraction: f64,
    pub energy: f64,
    #[serde(skip)]
    pub action_log: Vec<Vec<f64>>,
}

/// Accumulates one episode's metrics step by step.
#[derive(Clone, Debug)]
pub struct EpisodeRecorder {
    max_steps: usize,
    reward: f64,
    solved_steps: usize,
    actions: Vec<Vec<f64>>,
}

impl EpisodeRecorder {
    pub fn new(max_steps: usize) -> Self {
        Self {
            max_steps,
            reward: 0.0,
            solved_steps: 0,
            actions: Vec::with_capacity(max_steps),
        }
    }

    /// `applied` is the activation vector as seen by the dynamics (clamped).
    pub fn record(&mut self, applied: Vec<f64>, step: &StepResult) {
        self.reward += step.reward;
        self.solved_steps += usize::from(step.solved);
        self.actions.push(applied);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn finish(self) -> EpisodeMetrics {
        EpisodeMetrics {
            cumulative_reward: self.reward,
            solved_fraction: self.solved_steps as f64 / self.max_steps.max(1) as f64,
            energy: energy_of(&self.actions),
            action_log: self.actions,
        }
    }
}
