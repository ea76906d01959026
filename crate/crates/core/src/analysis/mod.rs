//! Diagnostics over trained policies and logged actions.

mod dual_sim;
mod stats;

pub use dual_sim::{
    dual_sim_experiment, matched_dual_sim, AgentController, DualSimResult, IdealLinearController, MatchedDualSim,
    NoiseMode, NoisyController,
};
pub use stats::{average_ranks, pearson, variance, wilcoxon_signed_rank, WilcoxonResult};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, EpisodeMetrics, EpisodeRecorder};
use crate::error::{Error, Result};
use crate::gauss::symmetric_eigen;
use crate::trainer::{derive_seed, mean_sem, to_env_action, Agent};

/// Analyses the command line can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisKind {
    DualSim,
    Covariance,
    Pca,
    Allocation,
    Energy,
}

impl std::str::FromStr for AnalysisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dual-sim" => AnalysisKind::DualSim,
            "covariance" => AnalysisKind::Covariance,
            "pca" => AnalysisKind::Pca,
            "allocation" => AnalysisKind::Allocation,
            "energy" => AnalysisKind::Energy,
            other => return Err(Error::UnknownAnalysisKind(other.to_string())),
        })
    }
}

/// Sample mean and unbiased covariance of row samples.
pub fn empirical_covariance(samples: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let d = samples[0].len();
    let mut mean = DVector::zeros(d);
    for s in samples {
        if s.len() != d {
            return Err(Error::dims("empirical_covariance: sample width", d, s.len()));
        }
        mean += DVector::from_column_slice(s);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c = DVector::from_column_slice(s) - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (n - 1) as f64;
    Ok((mean, cov))
}

/// Correlation from covariance; zero-variance components get a unit diagonal
/// and zero off-diagonals.
pub fn correlation_from_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            return 1.0;
        }
        let denom = (cov[(i, i)] * cov[(j, j)]).sqrt();
        if denom > 0.0 {
            (cov[(i, j)] / denom).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    })
}

/// Eigenvalues (descending) and cumulative explained-variance fractions.
///
/// The curve is empty when the total variance is zero.
pub fn explained_variance_curve(cov: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let eig = symmetric_eigen(cov)?;
    let values = eig.values.to_vec();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Ok((values, Vec::new()));
    }
    let mut acc = 0.0;
    let curve = values
        .iter()
        .map(|v| {
            acc += v;
            acc / total
        })
        .collect();
    Ok((values, curve))
}

/// Smallest number of principal components whose cumulative explained
/// variance reaches `threshold` (at least 1).
pub fn pca_explained_variance(actions: &[Vec<f64>], threshold: f64) -> Result<usize> {
    let n_a = actions.first().map_or(0, |a| a.len());
    if actions.len() < n_a + 1 || actions.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: (n_a + 1).max(2),
            got: actions.len(),
        });
    }
    let (_, cov) = empirical_covariance(actions)?;
    let (_, curve) = explained_variance_curve(&cov)?;
    // Guard against the last cumulative fraction landing a hair under 1.
    let k = curve.iter().position(|c| *c >= threshold - 1e-12).map_or(curve.len(), |i| i + 1);
    Ok(k.max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub n_samples: usize,
    pub covariance: DMatrix<f64>,
    pub correlation: DMatrix<f64>,
    /// `α² W Diag(S_x² x²) Wᵀ` averaged over the logged states.
    pub noise_covariance: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance: Vec<f64>,
    /// Zero total variance: PCA is undefined.
    pub degenerate: bool,
}

/// Empirical action statistics next to the analytic noise covariance.
pub fn covariance_report(actions: &[Vec<f64>], agent: &Agent, states: &[Vec<f64>]) -> Result<CovarianceReport> {
    let n_a = agent.policy.action_dim();
    if actions.len() < 10 * n_a {
        return Err(Error::InsufficientSamples {
            needed: 10 * n_a,
            got: actions.len(),
        });
    }
    if states.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let (_, covariance) = empirical_covariance(actions)?;
    if covariance.nrows() != n_a {
        return Err(Error::dims("covariance_report: action width", n_a, covariance.nrows()));
    }
    let mut noise_covariance = DMatrix::zeros(n_a, n_a);
    for s in states {
        let (x, _) = agent.policy.forward(s)?;
        noise_covariance += agent.policy.latent_noise_covariance(&x, &agent.lattice);
    }
    noise_covariance /= states.len() as f64;
    let (eigenvalues, explained_variance) = explained_variance_curve(&covariance)?;
    Ok(CovarianceReport {
        n_samples: actions.len(),
        correlation: correlation_from_covariance(&covariance),
        degenerate: explained_variance.is_empty(),
        covariance,
        noise_covariance,
        eigenvalues,
        explained_variance,
    })
}

fn check_partition(groups: &[Vec<usize>], n_actions: usize) -> Result<()> {
    let mut seen = vec![false; n_actions];
    for (g, members) in groups.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyGroup { index: g });
        }
        for &i in members {
            if i >= n_actions {
                return Err(Error::InvalidPartition {
                    n_actions,
                    reason: format!("index {i} out of range"),
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPartition {
                    n_actions,
                    reason: format!("index {i} appears twice"),
                });
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidPartition {
            n_actions,
            reason: format!("index {i} is not in any group"),
        });
    }
    Ok(())
}

/// Group fractions of the per-actuator std sum.
pub fn allocation_from_std(std: &[f64], groups: &[Vec<usize>]) -> Result<Vec<f64>> {
    check_partition(groups, std.len())?;
    let total: f64 = std.iter().sum();
    Ok(groups
        .iter()
        .map(|g| g.iter().map(|&i| std[i]).sum::<f64>() / total)
        .collect())
}

/// Fraction of exploration noise each actuator group receives.
///
/// Per-actuator std is the square root of the action-covariance diagonal
/// averaged over `states`.
pub fn noise_allocation(agent: &Agent, states: &[Vec<f64>], groups: &[Vec<usize>]) -> Result<Vec<f64>> {
    let n_a = agent.policy.action_dim();
    check_partition(groups, n_a)?;
    if states.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut diag = DVector::zeros(n_a);
    for s in states {
        let (x, _) = agent.policy.forward(s)?;
        diag += agent.policy.action_covariance(&x, &agent.lattice)?.diagonal();
    }
    diag /= states.len() as f64;
    let std: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
    allocation_from_std(&std, groups)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStructure {
    /// Pearson r between empirical noise-correlation and analytic latent-noise
    /// covariance off-diagonals.
    pub pearson_r: f64,
    pub empirical_correlation: DMatrix<f64>,
    pub analytic_covariance: DMatrix<f64>,
}

/// Checks that sampled noise carries the structure `W` imprints on it.
pub fn noise_structure(agent: &Agent, states: &[Vec<f64>], draws_per_state: usize, seed: u64) -> Result<NoiseStructure> {
    let n_a = agent.policy.action_dim();
    if n_a < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n_a });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 20));
    let mut noise = Vec::with_capacity(states.len() * draws_per_state);
    let mut analytic = DMatrix::zeros(n_a, n_a);
    for s in states {
        let fwd = agent.policy.forward_traced(s)?;
        analytic += agent.policy.latent_noise_covariance(&fwd.latent, &agent.lattice);
        for _ in 0..draws_per_state {
            let mut p = None;
            let a = agent.sample_action(&fwd, &mut p, 0, &mut rng)?;
            noise.push((a - &fwd.mean).as_slice().to_vec());
        }
    }
    analytic /= states.len() as f64;
    let (_, cov) = empirical_covariance(&noise)?;
    let corr = correlation_from_covariance(&cov);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..n_a {
        for j in i + 1..n_a {
            xs.push(corr[(i, j)]);
            ys.push(analytic[(i, j)]);
        }
    }
    Ok(NoiseStructure {
        pearson_r: pearson(&xs, &ys)?,
        empirical_correlation: corr,
        analytic_covariance: analytic,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyDistribution {
    pub values: Vec<f64>,
    pub mean: f64,
    pub sem: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub fn energy_distribution(episodes: &[EpisodeMetrics]) -> Result<EnergyDistribution> {
    if episodes.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let values: Vec<f64> = episodes.iter().map(|e| e.energy).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let (mean, sem) = mean_sem(&values);
    Ok(EnergyDistribution {
        mean,
        sem,
        min: sorted[0],
        median,
        max: sorted[n - 1],
        values,
    })
}

/// States, latents and policy-space actions visited by an agent.
#[derive(Clone, Debug, Default)]
pub struct PolicyLog {
    pub states: Vec<Vec<f64>>,
    pub latents: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub episodes: Vec<EpisodeMetrics>,
}

/// Runs `n_episodes` and logs every step; stochastic unless `deterministic`.
pub fn rollout_log(agent: &Agent, spec: &EnvSpec, n_episodes: usize, deterministic: bool, seed: u64) -> Result<PolicyLog> {
    let mut env = spec.build(derive_seed(seed, 30))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 31));
    let bounds = env.action_bounds();
    let mut log = PolicyLog::default();
    for _ in 0..n_episodes {
        let mut obs = env.reset();
        let mut rec = EpisodeRecorder::new(env.max_steps());
        let mut noise = None;
        for t in 0.. {
            let fwd = agent.policy.forward_traced(&obs)?;
            let a = if deterministic {
                fwd.mean.clone()
            } else {
                agent.sample_action(&fwd, &mut noise, t, &mut rng)?
            };
            log.states.push(obs.clone());
            log.latents.push(fwd.latent.as_slice().to_vec());
            log.actions.push(a.as_slice().to_vec());
            let applied = to_env_action(&a, bounds);
            let step = env.step(&applied)?;
            rec.record(applied, &step);
            obs = step.obs;
            if step.done {
                break;
            }
        }
        log.episodes.push(rec.finish());
    }
    Ok(log)
}

pub const MATRIX_CSV_HEADER: &str = "row,col,value";

/// Long-form matrix CSV: one `row,col,value` line per entry, row-major.
pub fn write_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::from(MATRIX_CSV_HEADER);
    out.push('\n');
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push_str(&format!("{i},{j},{}\n", m[(i, j)]));
        }
    }
    out
}

pub fn read_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines();
    if lines.next() != Some(MATRIX_CSV_HEADER) {
        return Err(Error::Config("matrix csv: unexpected header".into()));
    }
    let mut entries = Vec::new();
    let (mut rows, mut cols) = (0, 0);
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = |m: String| Error::ConfigParse {
            line: k + 2,
            column: 0,
            message: m,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", f.len())));
        }
        let i: usize = f[0].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
        let j: usize = f[1].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
        let v: f64 = f[2].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
        rows = rows.max(i + 1);
        cols = cols.max(j + 1);
        entries.push((i, j, v));
    }
    if entries.len() != rows * cols {
        return Err(Error::Config(format!(
            "matrix csv: {} entries for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    let mut m = DMatrix::from_element(rows, cols, f64::NAN);
    for (i, j, v) in entries {
        m[(i, j)] = v;
    }
    Ok(m)
}
