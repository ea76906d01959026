//! Exploration noise models.
//!
//! Three strategies share one interface:
//!
//! * independent Gaussian action noise, resampled every step;
//! * gSDE: a perturbation matrix `P_a` applied to the latent state `x` and
//!   held for `T` steps, giving action noise `P_a x`;
//! * Lattice: gSDE plus a latent perturbation `P_x` whose effect is routed
//!   through the policy's last linear layer, `a = (W + P_a + α W P_x) x`.
//!
//! For a fixed `x` the Lattice action is Gaussian with mean `W x` and covariance
//! `Diag(S_a² x²) + α² W Diag(S_x² x²) Wᵀ` (squares elementwise, `S² x²` a
//! matrix-vector product). A multiple `γ I` is added so the covariance stays
//! positive definite when `x` is sparse or null.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::FullCovGaussian;

/// How often the perturbation matrices are redrawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Period {
    /// Every `T` environment steps, counted from the start of the episode.
    Steps(usize),
    /// Once per episode, at reset.
    Episode,
}

impl Period {
    /// Whether a resample is due at `step_in_episode` (0 at reset).
    pub fn resample_due(self, step_in_episode: usize) -> bool {
        match self {
            Period::Steps(t) => step_in_episode % t.max(1) == 0,
            Period::Episode => step_in_episode == 0,
        }
    }
}

impl Serialize for Period {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Period::Steps(t) => s.serialize_u64(*t as u64),
            Period::Episode => s.serialize_str("episode"),
        }
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Steps(u64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Steps(0) => Err(serde::de::Error::custom("period must be >= 1")),
            Raw::Steps(t) => Ok(Period::Steps(t as usize)),
            Raw::Name(n) if n == "episode" => Ok(Period::Episode),
            Raw::Name(n) => Err(serde::de::Error::custom(format!(
                "period must be a positive integer or \"episode\", got \"{n}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    /// Weight of the latent perturbation; 0 reduces Lattice to gSDE.
    pub alpha: f64,
    pub period: Period,
    pub std_min: f64,
    pub std_max: f64,
    /// Diagonal regularizer added to the action covariance.
    pub gamma: f64,
    pub init_log_std: f64,
    /// Subtract `0.5 ln N_x` from the learned log-std matrices.
    pub rescale: bool,
    /// Block gradients from the covariance into `W` and the hidden layers.
    pub stop_variance_gradient: bool,
    /// One learnable std per matrix entry; otherwise one per latent column.
    pub full_std: bool,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            period: Period::Steps(1),
            std_min: 0.001,
            std_max: 10.0,
            gamma: 0.001,
            init_log_std: 0.0,
            rescale: true,
            stop_variance_gradient: false,
            full_std: false,
        }
    }
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.std_min > 0.0 && self.std_min < self.std_max) {
            return Err(Error::Config(format!(
                "need 0 < std_min < std_max, got ({}, {})",
                self.std_min, self.std_max
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::Config("init_log_std must be finite".into()));
        }
        Ok(())
    }
}

/// Learnable log-std matrices `log S̃_x` (`N_x × N_x`) and `log S̃_a` (`N_a × N_x`).
///
/// When `full` is false each matrix stores a single row that is broadcast
/// over all rows, i.e. one parameter per latent column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStdMatrices {
    pub log_std_x: DMatrix<f64>,
    pub log_std_a: DMatrix<f64>,
    pub full: bool,
    pub n_x: usize,
    pub n_a: usize,
    pub learn_x: bool,
    pub learn_a: bool,
}

impl NoiseStdMatrices {
    pub fn new(n_x: usize, n_a: usize, init_log_std: f64, full: bool) -> Self {
        let (rx, ra) = if full { (n_x, n_a) } else { (1, 1) };
        Self {
            log_std_x: DMatrix::from_element(rx, n_x, init_log_std),
            log_std_a: DMatrix::from_element(ra, n_x, init_log_std),
            full,
            n_x,
            n_a,
            learn_x: true,
            learn_a: true,
        }
    }

    /// Expanded `N_x × N_x` view of `log S̃_x`.
    pub fn expanded_x(&self) -> DMatrix<f64> {
        broadcast_rows(&self.log_std_x, self.n_x)
    }

    /// Expanded `N_a × N_x` view of `log S̃_a`.
    pub fn expanded_a(&self) -> DMatrix<f64> {
        broadcast_rows(&self.log_std_a, self.n_a)
    }

    pub fn is_finite(&self) -> bool {
        self.log_std_x.iter().chain(self.log_std_a.iter()).all(|v| v.is_finite())
    }

    /// Std matrices as used by the sampling path and by the distribution.
    pub fn effective(&self, cfg: &LatticeConfig) -> EffectiveStd {
        let raw = if cfg.rescale {
            rescaled_log_std(self, self.n_x)
        } else {
            self.clone()
        };
        let sample_x = raw.expanded_x().map(f64::exp);
        let sample_a = raw.expanded_a().map(f64::exp);
        EffectiveStd {
            dist_x: clip_std(&sample_x, cfg.std_min, cfg.std_max),
            dist_a: clip_std(&sample_a, cfg.std_min, cfg.std_max),
            sample_x,
            sample_a,
        }
    }
}

fn broadcast_rows(m: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    if m.nrows() == rows {
        m.clone()
    } else {
        DMatrix::from_fn(rows, m.ncols(), |_, j| m[(0, j)])
    }
}

/// Exponentiated std matrices. Sampling uses the unclipped values, the
/// distribution the clipped ones.
#[derive(Clone, Debug)]
pub struct EffectiveStd {
    pub sample_x: DMatrix<f64>,
    pub sample_a: DMatrix<f64>,
    pub dist_x: DMatrix<f64>,
    pub dist_a: DMatrix<f64>,
}

/// `log S = log S̃ − ½ ln N_x`, elementwise on both matrices.
pub fn rescaled_log_std(raw: &NoiseStdMatrices, n_x: usize) -> NoiseStdMatrices {
    let shift = 0.5 * (n_x.max(1) as f64).ln();
    NoiseStdMatrices {
        log_std_x: raw.log_std_x.map(|v| v - shift),
        log_std_a: raw.log_std_a.map(|v| v - shift),
        ..raw.clone()
    }
}

/// Elementwise clamp into `[std_min, std_max]`.
pub fn clip_std(std: &DMatrix<f64>, std_min: f64, std_max: f64) -> DMatrix<f64> {
    std.map(|s| s.clamp(std_min, std_max))
}

/// Perturbation matrices held fixed for one resampling window.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationMatrices {
    pub p_x: DMatrix<f64>,
    pub p_a: DMatrix<f64>,
    /// Steps taken since the last resample.
    pub age: usize,
}

impl PerturbationMatrices {
    pub fn zeros(n_x: usize, n_a: usize) -> Self {
        Self {
            p_x: DMatrix::zeros(n_x, n_x),
            p_a: DMatrix::zeros(n_a, n_x),
            age: 0,
        }
    }
}

/// Draws `(P_a)_{ij} ~ N(0, (S_a)²_{ij})` and `(P_x)_{ij} ~ N(0, (S_x)²_{ij})`.
///
/// `P_a` is drawn first. With `sample_latent == false` the latent matrix is
/// left at zero and no random numbers are consumed for it, so an `α = 0`
/// Lattice stream is identical to a gSDE stream.
pub fn resample_perturbations<R: Rng + ?Sized>(
    s_x: &DMatrix<f64>,
    s_a: &DMatrix<f64>,
    sample_latent: bool,
    rng: &mut R,
) -> PerturbationMatrices {
    let mut draw = |s: &DMatrix<f64>| {
        // Row-major draw order keeps streams independent of nalgebra's storage order.
        let mut p = DMatrix::zeros(s.nrows(), s.ncols());
        for i in 0..s.nrows() {
            for j in 0..s.ncols() {
                let z: f64 = rng.sample(StandardNormal);
                p[(i, j)] = s[(i, j)] * z;
            }
        }
        p
    };
    let p_a = draw(s_a);
    let p_x = if sample_latent {
        draw(s_x)
    } else {
        DMatrix::zeros(s_x.nrows(), s_x.ncols())
    };
    PerturbationMatrices { p_x, p_a, age: 0 }
}

/// `(W + P_a + α W P_x) x`.
pub fn perturbed_action(
    x: &DVector<f64>,
    w: &DMatrix<f64>,
    p: &PerturbationMatrices,
    alpha: f64,
) -> Result<DVector<f64>> {
    let n_x = x.len();
    if w.ncols() != n_x {
        return Err(Error::dims("perturbed_action: W columns", n_x, w.ncols()));
    }
    if p.p_a.nrows() != w.nrows() || p.p_a.ncols() != n_x {
        return Err(Error::dims("perturbed_action: P_a shape", w.nrows() * n_x, p.p_a.len()));
    }
    if p.p_x.nrows() != n_x || p.p_x.ncols() != n_x {
        return Err(Error::dims("perturbed_action: P_x shape", n_x * n_x, p.p_x.len()));
    }
    let mut a = (w + &p.p_a) * x;
    if alpha != 0.0 {
        a += w * (&p.p_x * x) * alpha;
    }
    Ok(a)
}

/// Latent-space noise `α P_x x`.
pub fn latent_noise(x: &DVector<f64>, p: &PerturbationMatrices, alpha: f64) -> DVector<f64> {
    &p.p_x * x * alpha
}

/// The diagonal terms `u = S_a² x²` and `v = S_x² x²`.
pub(crate) fn variance_terms(
    x: &DVector<f64>,
    s_x: &DMatrix<f64>,
    s_a: &DMatrix<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let x2 = x.map(|v| v * v);
    let u = s_a.map(|s| s * s) * &x2;
    let v = s_x.map(|s| s * s) * &x2;
    (u, v)
}

/// `α² W Diag(S_x² x²) Wᵀ`, the off-diagonal (correlated) part of the noise.
pub fn latent_noise_covariance(
    x: &DVector<f64>,
    w: &DMatrix<f64>,
    s_x: &DMatrix<f64>,
) -> DMatrix<f64> {
    let x2 = x.map(|v| v * v);
    let v = s_x.map(|s| s * s) * x2;
    let wv = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)] * v[j]);
    crate::gauss::symmetrize(&(&wv * w.transpose()))
}

/// `Diag(S_a² x²) + α² W Diag(S_x² x²) Wᵀ + γ I`.
pub fn lattice_covariance(
    x: &DVector<f64>,
    w: &DMatrix<f64>,
    s_x: &DMatrix<f64>,
    s_a: &DMatrix<f64>,
    alpha: f64,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let (n_a, n_x) = (w.nrows(), w.ncols());
    if x.len() != n_x {
        return Err(Error::dims("action covariance: latent length", n_x, x.len()));
    }
    if s_x.shape() != (n_x, n_x) {
        return Err(Error::dims("action covariance: S_x rows", n_x, s_x.nrows()));
    }
    if s_a.shape() != (n_a, n_x) {
        return Err(Error::dims("action covariance: S_a rows", n_a, s_a.nrows()));
    }
    let (u, _) = variance_terms(x, s_x, s_a);
    let mut cov = if alpha != 0.0 {
        latent_noise_covariance(x, w, s_x) * (alpha * alpha)
    } else {
        DMatrix::zeros(n_a, n_a)
    };
    for i in 0..n_a {
        cov[(i, i)] += u[i] + gamma;
    }
    Ok(cov)
}

/// The Lattice action distribution for latent `x`, using the clipped std.
///
/// Mean is `W x`; callers add the final-layer bias themselves.
pub fn action_distribution(
    x: &DVector<f64>,
    w: &DMatrix<f64>,
    std: &EffectiveStd,
    cfg: &LatticeConfig,
) -> Result<FullCovGaussian> {
    let cov = lattice_covariance(x, w, &std.dist_x, &std.dist_a, cfg.alpha, cfg.gamma)?;
    FullCovGaussian::new(w * x, cov)
}

/// `mean + σ ⊙ ε`, `ε` standard normal, fresh every call.
pub fn independent_action_noise<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    sigma: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    DVector::from_iterator(
        mean.len(),
        mean.iter().zip(sigma.iter()).map(|(m, s)| {
            let z: f64 = rng.sample(StandardNormal);
            m + s * z
        }),
    )
}
