//! Run directories: training artifacts, evaluation and report files.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.json        effective configuration
//! checkpoints/       update_000010.json ... final.json
//! curves.csv         learning curve
//! metrics.json       final evaluation
//! reports/           analysis output
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, covariance_report, energy_distribution, matched_dual_sim, noise_allocation, pca_explained_variance,
    rollout_log, AgentController, AnalysisKind,
};
use crate::config::{RunConfig, Strategy};
use crate::envs::EpisodeMetrics;
use crate::error::{Error, Result};
use crate::trainer::{evaluate_agent, mean_sem, write_curve_csv, Checkpoint, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    pub sem: f64,
}

impl MeanSem {
    pub fn of(values: &[f64]) -> Self {
        let (mean, sem) = mean_sem(values);
        Self { mean, sem }
    }
}

impl std::fmt::Display for MeanSem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.sem)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_episodes: usize,
    pub deterministic: bool,
    pub seed: u64,
    pub reward: MeanSem,
    pub solved_fraction: MeanSem,
    pub energy: MeanSem,
    pub episodes: Vec<EpisodeMetrics>,
}

impl EvalReport {
    pub fn from_episodes(episodes: Vec<EpisodeMetrics>, deterministic: bool, seed: u64) -> Self {
        let col = |f: fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).collect::<Vec<_>>();
        Self {
            n_episodes: episodes.len(),
            deterministic,
            seed,
            reward: MeanSem::of(&col(|e| e.cumulative_reward)),
            solved_fraction: MeanSem::of(&col(|e| e.solved_fraction)),
            energy: MeanSem::of(&col(|e| e.energy)),
            episodes,
        }
    }
}

pub fn evaluate_checkpoint(ck: &Checkpoint, n_episodes: usize, deterministic: bool, seed: u64) -> Result<EvalReport> {
    let agent = ck.to_agent()?;
    let episodes = evaluate_agent(&agent, &ck.config.env, n_episodes, deterministic, seed)?;
    Ok(EvalReport::from_episodes(episodes, deterministic, seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub strategy: Strategy,
    pub seed: u64,
    pub updates: usize,
    pub env_steps: usize,
    pub deterministic: EvalReport,
    pub stochastic: EvalReport,
}

pub fn default_run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-seed{}", cfg.strategy.as_str(), cfg.seed)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Trains per `cfg` and fills `out` with the standard artifacts.
pub fn train_run(cfg: RunConfig, out: &Path) -> Result<RunMetrics> {
    cfg.validate()?;
    let ck_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ck_dir)?;
    std::fs::create_dir_all(out.join("reports"))?;
    std::fs::write(out.join("config.json"), cfg.to_json())?;

    let every = cfg.checkpoint_every;
    let curve_path = out.join("curves.csv");
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut rows = Vec::new();
    while !trainer.is_done() {
        rows.push(trainer.step()?);
        if every > 0 && trainer.update % every == 0 {
            trainer
                .checkpoint()
                .save(&ck_dir.join(format!("update_{:06}.json", trainer.update)))?;
            std::fs::write(&curve_path, write_curve_csv(&rows))?;
        }
    }
    std::fs::write(&curve_path, write_curve_csv(&rows))?;
    trainer.checkpoint().save(&ck_dir.join("final.json"))?;

    let agent = &trainer.agent;
    let n = cfg.eval_episodes;
    let metrics = RunMetrics {
        strategy: cfg.strategy,
        seed: cfg.seed,
        updates: trainer.update,
        env_steps: trainer.env_steps,
        deterministic: EvalReport::from_episodes(evaluate_agent(agent, &cfg.env, n, true, cfg.seed)?, true, cfg.seed),
        stochastic: EvalReport::from_episodes(evaluate_agent(agent, &cfg.env, n, false, cfg.seed)?, false, cfg.seed),
    };
    write_json(&out.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzeParams {
    pub episodes: usize,
    pub deterministic: bool,
    pub seed: u64,
    pub threshold: f64,
    pub dual_sim_steps: usize,
}

impl Default for AnalyzeParams {
    fn default() -> Self {
        Self {
            episodes: 100,
            deterministic: false,
            seed: 0,
            threshold: 0.9,
            dual_sim_steps: 10_000,
        }
    }
}

#[derive(Serialize)]
struct DualSimSummary<'a> {
    accel_variance_ratio: f64,
    angle_variance_ratio: f64,
    wilcoxon: &'a analysis::WilcoxonResult,
    latent_injected_std: &'a [f64],
    action_sigma_match: &'a [f64],
    n_steps: usize,
}

#[derive(Serialize)]
struct CovarianceSummary {
    n_samples: usize,
    degenerate: bool,
    eigenvalues: Vec<f64>,
    explained_variance: Vec<f64>,
}

#[derive(Serialize)]
struct PcaSummary {
    threshold: f64,
    components: usize,
    n_actions: usize,
    n_samples: usize,
}

#[derive(Serialize)]
struct AllocationSummary {
    groups: Vec<Vec<usize>>,
    fractions: Vec<f64>,
}

fn column(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}

/// Runs one analysis on a checkpoint and writes its reports into `out`.
pub fn analyze_checkpoint(ck: &Checkpoint, kind: AnalysisKind, params: &AnalyzeParams, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let agent = ck.to_agent()?;
    let spec = &ck.config.env;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = out.join(name);
        std::fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    match kind {
        AnalysisKind::DualSim => {
            let env = spec.build(0)?;
            let ctrl = AgentController {
                agent: &agent,
                bounds: env.action_bounds(),
            };
            let r = matched_dual_sim(spec, &ctrl, params.dual_sim_steps, params.seed)?;
            let dev = DMatrix::from_fn(r.latent.n_steps, 4, |i, j| match j {
                0 => r.latent.angle_deviation[i],
                1 => r.action.angle_deviation[i],
                2 => r.latent.accel_deviation[i],
                _ => r.action.accel_deviation[i],
            });
            put("dual_sim_deviations.csv", analysis::write_matrix_csv(&dev))?;
            let summary = DualSimSummary {
                accel_variance_ratio: r.accel_variance_ratio,
                angle_variance_ratio: r.angle_variance_ratio,
                wilcoxon: &r.wilcoxon,
                latent_injected_std: &r.latent.injected_std,
                action_sigma_match: &r.action.sigma_match,
                n_steps: r.latent.n_steps,
            };
            put("dual_sim.json", serde_json::to_string_pretty(&summary)?)?;
        }
        AnalysisKind::Covariance => {
            let log = rollout_log(&agent, spec, params.episodes, params.deterministic, params.seed)?;
            let r = covariance_report(&log.actions, &agent, &log.states)?;
            put("covariance.csv", analysis::write_matrix_csv(&r.covariance))?;
            put("correlation.csv", analysis::write_matrix_csv(&r.correlation))?;
            put("noise_covariance.csv", analysis::write_matrix_csv(&r.noise_covariance))?;
            put("explained_variance.csv", analysis::write_matrix_csv(&column(&r.explained_variance)))?;
            let summary = CovarianceSummary {
                n_samples: r.n_samples,
                degenerate: r.degenerate,
                eigenvalues: r.eigenvalues,
                explained_variance: r.explained_variance,
            };
            put("covariance.json", serde_json::to_string_pretty(&summary)?)?;
        }
        AnalysisKind::Pca => {
            let log = rollout_log(&agent, spec, params.episodes, params.deterministic, params.seed)?;
            let k = pca_explained_variance(&log.actions, params.threshold)?;
            let summary = PcaSummary {
                threshold: params.threshold,
                components: k,
                n_actions: agent.policy.action_dim(),
                n_samples: log.actions.len(),
            };
            put("pca.json", serde_json::to_string_pretty(&summary)?)?;
        }
        AnalysisKind::Allocation => {
            let log = rollout_log(&agent, spec, params.episodes, true, params.seed)?;
            let groups = spec.build(0)?.actuator_groups();
            let fractions = noise_allocation(&agent, &log.states, &groups)?;
            put("allocation.json", serde_json::to_string_pretty(&AllocationSummary { groups, fractions })?)?;
        }
        AnalysisKind::Energy => {
            let log = rollout_log(&agent, spec, params.episodes, params.deterministic, params.seed)?;
            let d = energy_distribution(&log.episodes)?;
            put("energy.csv", analysis::write_matrix_csv(&column(&d.values)))?;
            put("energy.json", serde_json::to_string_pretty(&d)?)?;
        }
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub deterministic_solved_fraction: MeanSem,
    pub stochastic_solved_fraction: MeanSem,
    pub deterministic_energy: MeanSem,
    pub stochastic_energy: MeanSem,
    pub deterministic_reward: MeanSem,
    pub stochastic_reward: MeanSem,
}

/// Aggregates `metrics.json` of several runs per strategy (mean ± sem over seeds).
pub fn compare_runs(run_dirs: &[PathBuf]) -> Result<Vec<StrategySummary>> {
    if run_dirs.is_empty() {
        return Err(Error::Config("compare needs at least one run directory".into()));
    }
    let mut by_strategy: Vec<(Strategy, Vec<(PathBuf, RunMetrics)>)> = Vec::new();
    for dir in run_dirs {
        let text = std::fs::read_to_string(dir.join("metrics.json"))?;
        let m: RunMetrics = serde_json::from_str(&text)?;
        match by_strategy.iter_mut().find(|(s, _)| *s == m.strategy) {
            Some((_, v)) => v.push((dir.clone(), m)),
            None => by_strategy.push((m.strategy, vec![(dir.clone(), m)])),
        }
    }
    Ok(by_strategy
        .into_iter()
        .map(|(strategy, runs)| {
            let f = |g: fn(&RunMetrics) -> f64| MeanSem::of(&runs.iter().map(|(_, m)| g(m)).collect::<Vec<_>>());
            StrategySummary {
                strategy,
                seeds: runs.iter().map(|(_, m)| m.seed).collect(),
                deterministic_solved_fraction: f(|m| m.deterministic.solved_fraction.mean),
                stochastic_solved_fraction: f(|m| m.stochastic.solved_fraction.mean),
                deterministic_energy: f(|m| m.deterministic.energy.mean),
                stochastic_energy: f(|m| m.stochastic.energy.mean),
                deterministic_reward: f(|m| m.deterministic.reward.mean),
                stochastic_reward: f(|m| m.stochastic.reward.mean),
                runs: runs.into_iter().map(|(p, _)| p).collect(),
            }
        })
        .collect())
}

/// Directory where reports for `checkpoint` go by default: the run's
/// `reports/` when the checkpoint sits in a run's `checkpoints/`.
pub fn default_report_dir(checkpoint: &Path) -> PathBuf {
    match checkpoint.parent() {
        Some(p) if p.file_name().is_some_and(|n| n == "checkpoints") => {
            p.parent().unwrap_or(Path::new(".")).join("reports")
        }
        _ => PathBuf::from("reports"),
    }
}
