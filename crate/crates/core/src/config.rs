//! Run configuration, loaded from versioned JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::exploration::LatticeConfig;
use crate::policy::Activation;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Independent Gaussian action noise, state-independent std.
    Diagonal,
    /// Perturbation of the action path only (Lattice with `α = 0`).
    Gsde,
    Lattice,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Diagonal => "diagonal",
            Strategy::Gsde => "gsde",
            Strategy::Lattice => "lattice",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Rollout length per environment between updates.
    #[serde(alias = "gradient_steps")]
    pub n_steps: usize,
    pub n_epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantage: bool,
    /// Add `γ V(s_T)` to the reward of time-limit truncated steps.
    pub bootstrap_truncated: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2.5e-5,
            batch_size: 32,
            n_steps: 128,
            n_epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.9,
            clip_range: 0.3,
            entropy_coef: 3.6e-6,
            value_coef: 0.84,
            max_grad_norm: 0.7,
            normalize_advantage: true,
            bootstrap_truncated: true,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate >= 0.0) {
            return bad("ppo.learning_rate must be >= 0");
        }
        if self.batch_size == 0 || self.n_steps == 0 || self.n_epochs == 0 {
            return bad("ppo.batch_size, ppo.n_steps and ppo.n_epochs must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("ppo.gamma and ppo.gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_range > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("ppo.clip_range and ppo.max_grad_norm must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            policy_hidden: vec![256, 256],
            value_hidden: vec![256, 256],
            activation: Activation::Relu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub env: EnvSpec,
    pub strategy: Strategy,
    pub lattice: LatticeConfig,
    pub ppo: PpoConfig,
    pub network: NetworkConfig,
    pub seed: u64,
    pub total_env_steps: usize,
    pub n_envs: usize,
    /// Write a checkpoint every this many updates (0 disables periodic checkpoints).
    pub checkpoint_every: usize,
    pub eval_episodes: usize,
    /// Record wall-clock seconds in the learning curve. Off by default so that
    /// curves are byte-reproducible.
    pub log_wall_time: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            env: EnvSpec::default(),
            strategy: Strategy::Lattice,
            lattice: LatticeConfig::default(),
            ppo: PpoConfig::default(),
            network: NetworkConfig::default(),
            seed: 0,
            total_env_steps: 1_000_000,
            n_envs: 16,
            checkpoint_every: 10,
            eval_episodes: 100,
            log_wall_time: false,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::ConfigParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n_envs == 0 {
            return Err(Error::Config("n_envs must be positive".into()));
        }
        self.lattice.validate()?;
        self.ppo.validate()
    }

    /// Exploration settings as actually used: gSDE is Lattice with `α = 0`.
    pub fn effective_lattice(&self) -> LatticeConfig {
        effective_lattice(self.strategy, &self.lattice)
    }
}

pub fn effective_lattice(strategy: Strategy, lattice: &LatticeConfig) -> LatticeConfig {
    match strategy {
        Strategy::Gsde => LatticeConfig {
            alpha: 0.0,
            ..lattice.clone()
        },
        _ => lattice.clone(),
    }
}
