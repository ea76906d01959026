use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Agent;
use crate::config::{RunConfig, Strategy};
use crate::error::{Error, Result};
use crate::exploration::LatticeConfig;
use crate::policy::{Activation, MlpPolicy, NoiseParams, PolicyLayout, ValueNet};

pub const CHECKPOINT_FORMAT: &str = "lattice-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing snapshot of a trained agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub strategy: Strategy,
    pub lattice: LatticeConfig,
    pub policy_layout: PolicyLayout,
    pub value_hidden: Vec<usize>,
    pub value_activation: Activation,
    /// Which noise matrices carry learnable parameters (`[x, a]`).
    pub noise_learnable: Option<[bool; 2]>,
    pub update: usize,
    pub env_steps: usize,
    pub config: RunConfig,
    pub policy_params: Vec<f64>,
    pub value_params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(agent: &Agent, config: &RunConfig, update: usize, env_steps: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            strategy: agent.strategy,
            lattice: agent.lattice.clone(),
            policy_layout: agent.policy.layout(),
            value_hidden: agent.value.body.layers.iter().map(|l| l.n_out()).collect(),
            value_activation: agent.value.body.activation,
            noise_learnable: match &agent.policy.noise {
                NoiseParams::Diagonal { .. } => None,
                NoiseParams::Matrices(m) => Some([m.learn_x, m.learn_a]),
            },
            update,
            env_steps,
            config: config.clone(),
            policy_params: agent.policy.to_flat(),
            value_params: agent.value.to_flat(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::CheckpointCorrupt(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::CheckpointCorrupt(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointCorrupt(format!("unsupported version {}", ck.version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rebuilds the agent; parameter counts must match the recorded layout.
    pub fn to_agent(&self) -> Result<Agent> {
        let mut policy = MlpPolicy::zeros(&self.policy_layout);
        if let (NoiseParams::Matrices(m), Some([x, a])) = (&mut policy.noise, self.noise_learnable) {
            m.learn_x = x;
            m.learn_a = a;
        }
        policy.load_flat(&self.policy_params)?;
        let mut value = ValueNet::zeros(self.policy_layout.obs_dim, &self.value_hidden, self.value_activation);
        value.load_flat(&self.value_params)?;
        Ok(Agent {
            policy,
            value,
            strategy: self.strategy,
            lattice: self.lattice.clone(),
        })
    }
}
