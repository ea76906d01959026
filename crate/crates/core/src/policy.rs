//! Feed-forward actor and critic with hand-written reverse-mode gradients.
//!
//! The actor's hidden stack produces the latent vector `x`; a final linear map
//! `W x + b` gives the mean action. The noise model is attached to the actor
//! and its log-std parameters receive gradients alongside the network weights.
//!
//! Gradients are accumulated into a [`GradientTape`], which is just a policy
//! of the same shape holding partial derivatives.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exploration::{self, EffectiveStd, LatticeConfig, NoiseStdMatrices};
use crate::gauss::FullCovGaussian;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Gelu,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Gelu => 0.5 * z * (1.0 + (GELU_C * (z + 0.044715 * z * z * z)).tanh()),
        }
    }

    /// d/dz of `apply`, given the pre-activation.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Gelu => {
                let t = (GELU_C * (z + 0.044715 * z * z * z)).tanh();
                0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * z * z)
            }
        }
    }
}

/// Affine layer, `weight` is `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weight: DMatrix::zeros(n_out, n_in),
            bias: DVector::zeros(n_out),
        }
    }

    /// Orthogonal weights scaled by `gain`, zero bias.
    pub fn orthogonal<R: Rng + ?Sized>(n_in: usize, n_out: usize, gain: f64, rng: &mut R) -> Self {
        let big = n_in.max(n_out);
        let a = DMatrix::from_fn(big, big, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = a.qr();
        let mut q = qr.q();
        // sign fix so the distribution is uniform over orthogonal matrices
        let r = qr.r();
        for j in 0..big {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let weight = q.view((0, 0), (n_out, n_in)).into_owned() * gain;
        Self {
            weight,
            bias: DVector::zeros(n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, input: &DVector<f64>) -> DVector<f64> {
        &self.weight * input + &self.bias
    }
}

/// Hidden stack: affine followed by the activation, for every layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Per-layer inputs and pre-activations recorded during a forward pass.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    inputs: Vec<DVector<f64>>,
    pre: Vec<DVector<f64>>,
    pub output: DVector<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        n_in: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut prev = n_in;
        for &h in hidden {
            layers.push(Dense::orthogonal(prev, h, std::f64::consts::SQRT_2, rng));
            prev = h;
        }
        Self { layers, activation }
    }

    pub fn zeros(n_in: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut prev = n_in;
        let layers = hidden
            .iter()
            .map(|&h| {
                let d = Dense::zeros(prev, h);
                prev = h;
                d
            })
            .collect();
        Self { layers, activation }
    }

    pub fn n_in(&self) -> Option<usize> {
        self.layers.first().map(Dense::n_in)
    }

    pub fn forward(&self, input: &DVector<f64>) -> MlpTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = input.clone();
        for layer in &self.layers {
            let z = layer.forward(&h);
            let next = z.map(|v| self.activation.apply(v));
            inputs.push(h);
            pre.push(z);
            h = next;
        }
        MlpTrace {
            inputs,
            pre,
            output: h,
        }
    }

    /// Accumulates parameter gradients for `d_out = ∂L/∂output` into `grads`.
    pub fn backward(&self, trace: &MlpTrace, d_out: &DVector<f64>, grads: &mut Mlp) {
        let mut delta = d_out.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let dz = delta.zip_map(&trace.pre[k], |d, z| d * self.activation.derivative(z));
            let g = &mut grads.layers[k];
            g.weight.ger(1.0, &dz, &trace.inputs[k], 1.0);
            g.bias += &dz;
            if k > 0 {
                delta = layer.weight.tr_mul(&dz);
            }
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

/// Learnable noise parameters attached to the actor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseParams {
    /// State-independent per-action log-std (independent action noise).
    Diagonal { log_std: DVector<f64> },
    /// gSDE / Lattice perturbation std matrices.
    Matrices(NoiseStdMatrices),
}

impl NoiseParams {
    fn slices(&self) -> Vec<&[f64]> {
        match self {
            NoiseParams::Diagonal { log_std } => vec![log_std.as_slice()],
            NoiseParams::Matrices(m) => vec![m.log_std_x.as_slice(), m.log_std_a.as_slice()],
        }
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            NoiseParams::Diagonal { log_std } => vec![log_std.as_mut_slice()],
            NoiseParams::Matrices(m) => vec![m.log_std_x.as_mut_slice(), m.log_std_a.as_mut_slice()],
        }
    }

    fn zeroed(&self) -> Self {
        match self {
            NoiseParams::Diagonal { log_std } => NoiseParams::Diagonal {
                log_std: DVector::zeros(log_std.len()),
            },
            NoiseParams::Matrices(m) => NoiseParams::Matrices(NoiseStdMatrices {
                log_std_x: DMatrix::zeros(m.log_std_x.nrows(), m.log_std_x.ncols()),
                log_std_a: DMatrix::zeros(m.log_std_a.nrows(), m.log_std_a.ncols()),
                ..m.clone()
            }),
        }
    }
}

/// Shape description sufficient to rebuild a policy from a flat parameter list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyLayout {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub action_dim: usize,
    pub activation: Activation,
    /// `None` for independent action noise, `Some(full)` for std matrices.
    pub noise_matrices: Option<bool>,
}

impl PolicyLayout {
    pub fn latent_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.obs_dim)
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let mut prev = self.obs_dim;
        let mut n = 0;
        for &h in &self.hidden {
            n += prev * h + h;
            prev = h;
        }
        n += prev * self.action_dim + self.action_dim;
        n + match self.noise_matrices {
            None => self.action_dim,
            Some(true) => prev * prev + self.action_dim * prev,
            Some(false) => 2 * prev,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpPolicy {
    pub body: Mlp,
    /// Final linear map: `weight` is `W` (`N_a × N_x`), `bias` is `b`.
    pub head: Dense,
    pub noise: NoiseParams,
    obs_dim: usize,
}

/// Output of [`MlpPolicy::forward_traced`].
#[derive(Clone, Debug)]
pub struct PolicyForward {
    pub latent: DVector<f64>,
    pub mean: DVector<f64>,
    trace: MlpTrace,
}

/// Everything needed to back-propagate through one `log π(a|s)` evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub forward: PolicyForward,
    pub dist: FullCovGaussian,
    pub log_prob: f64,
    pub entropy: f64,
    action: DVector<f64>,
    std: Option<Arc<EffectiveStd>>,
}

impl MlpPolicy {
    pub fn new<R: Rng + ?Sized>(
        layout: &PolicyLayout,
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let body = Mlp::new(layout.obs_dim, &layout.hidden, layout.activation, rng);
        let head = Dense::orthogonal(layout.latent_dim(), layout.action_dim, 0.01, rng);
        Self {
            body,
            head,
            noise: initial_noise(layout, init_log_std),
            obs_dim: layout.obs_dim,
        }
    }

    pub fn zeros(layout: &PolicyLayout) -> Self {
        Self {
            body: Mlp::zeros(layout.obs_dim, &layout.hidden, layout.activation),
            head: Dense::zeros(layout.latent_dim(), layout.action_dim),
            noise: initial_noise(layout, 0.0),
            obs_dim: layout.obs_dim,
        }
    }

    pub fn layout(&self) -> PolicyLayout {
        PolicyLayout {
            obs_dim: self.obs_dim,
            hidden: self.body.layers.iter().map(Dense::n_out).collect(),
            action_dim: self.head.n_out(),
            activation: self.body.activation,
            noise_matrices: match &self.noise {
                NoiseParams::Diagonal { .. } => None,
                NoiseParams::Matrices(m) => Some(m.full),
            },
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.head.n_in()
    }

    pub fn action_dim(&self) -> usize {
        self.head.n_out()
    }

    pub fn forward_traced(&self, obs: &[f64]) -> Result<PolicyForward> {
        if obs.len() != self.obs_dim {
            return Err(Error::dims("policy forward: observation", self.obs_dim, obs.len()));
        }
        let trace = self.body.forward(&DVector::from_column_slice(obs));
        let latent = trace.output.clone();
        let mean = self.head.forward(&latent);
        Ok(PolicyForward {
            latent,
            mean,
            trace,
        })
    }

    /// Latent `x` and mean action `W x + b`.
    pub fn forward(&self, obs: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let f = self.forward_traced(obs)?;
        Ok((f.latent, f.mean))
    }

    /// Effective std matrices, `None` for independent noise.
    pub fn effective_std(&self, cfg: &LatticeConfig) -> Option<EffectiveStd> {
        match &self.noise {
            NoiseParams::Diagonal { .. } => None,
            NoiseParams::Matrices(m) => Some(m.effective(cfg)),
        }
    }

    /// Action covariance at latent `x`.
    pub fn action_covariance(&self, latent: &DVector<f64>, cfg: &LatticeConfig) -> Result<DMatrix<f64>> {
        match &self.noise {
            NoiseParams::Diagonal { log_std } => {
                Ok(DMatrix::from_diagonal(&log_std.map(|l| (2.0 * l).exp())))
            }
            NoiseParams::Matrices(m) => {
                let s = m.effective(cfg);
                exploration::lattice_covariance(latent, &self.head.weight, &s.dist_x, &s.dist_a, cfg.alpha, cfg.gamma)
            }
        }
    }

    /// Correlated part of the noise, `α² W Diag(S_x² x²) Wᵀ` (zero for independent noise).
    pub fn latent_noise_covariance(&self, latent: &DVector<f64>, cfg: &LatticeConfig) -> DMatrix<f64> {
        match &self.noise {
            NoiseParams::Diagonal { .. } => DMatrix::zeros(self.action_dim(), self.action_dim()),
            NoiseParams::Matrices(m) => {
                let s = m.effective(cfg);
                exploration::latent_noise_covariance(latent, &self.head.weight, &s.dist_x)
                    * (cfg.alpha * cfg.alpha)
            }
        }
    }

    /// Action distribution given an already-computed forward pass.
    pub fn distribution(&self, fwd: &PolicyForward, cfg: &LatticeConfig) -> Result<FullCovGaussian> {
        let cov = self.action_covariance(&fwd.latent, cfg)?;
        FullCovGaussian::new(fwd.mean.clone(), cov)
    }

    pub fn evaluate(&self, obs: &[f64], action: &[f64], cfg: &LatticeConfig) -> Result<Evaluation> {
        let forward = self.forward_traced(obs)?;
        self.evaluate_forward(forward, action, cfg)
    }

    pub fn evaluate_forward(
        &self,
        forward: PolicyForward,
        action: &[f64],
        cfg: &LatticeConfig,
    ) -> Result<Evaluation> {
        let std = self.effective_std(cfg).map(Arc::new);
        self.evaluate_forward_with(forward, action, cfg, std)
    }

    /// As [`evaluate_forward`](Self::evaluate_forward) with precomputed std
    /// matrices, which stay fixed while the parameters do.
    pub fn evaluate_forward_with(
        &self,
        forward: PolicyForward,
        action: &[f64],
        cfg: &LatticeConfig,
        std: Option<Arc<EffectiveStd>>,
    ) -> Result<Evaluation> {
        if action.len() != self.action_dim() {
            return Err(Error::dims("policy evaluate: action", self.action_dim(), action.len()));
        }
        let cov = match &std {
            None => self.action_covariance(&forward.latent, cfg)?,
            Some(s) => exploration::lattice_covariance(
                &forward.latent,
                &self.head.weight,
                &s.dist_x,
                &s.dist_a,
                cfg.alpha,
                cfg.gamma,
            )?,
        };
        let dist = FullCovGaussian::new(forward.mean.clone(), cov)?;
        let action = DVector::from_column_slice(action);
        let log_prob = dist.log_density(&action)?;
        let entropy = dist.entropy();
        Ok(Evaluation {
            forward,
            dist,
            log_prob,
            entropy,
            action,
            std,
        })
    }

    /// Accumulates `d_log_prob · ∂log π/∂θ + d_entropy · ∂H/∂θ` into `tape`.
    pub fn backward(
        &self,
        eval: &Evaluation,
        cfg: &LatticeConfig,
        d_log_prob: f64,
        d_entropy: f64,
        tape: &mut GradientTape,
    ) {
        let g = &mut tape.grads;
        let n_a = self.action_dim();
        let precision = eval.dist.precision();
        let residual = &eval.action - eval.dist.mean();
        let q = &precision * &residual;

        // ∂/∂mean and ∂/∂cov (cov entries treated as free variables).
        let d_mean = &q * d_log_prob;
        let mut d_cov = (&q * q.transpose() - &precision) * (0.5 * d_log_prob);
        d_cov += &precision * (0.5 * d_entropy);

        let x = &eval.forward.latent;
        g.head.weight.ger(1.0, &d_mean, x, 1.0);
        g.head.bias += &d_mean;
        let mut d_x = self.head.weight.tr_mul(&d_mean);

        match (&self.noise, &mut g.noise) {
            (NoiseParams::Diagonal { log_std }, NoiseParams::Diagonal { log_std: g_ls }) => {
                for i in 0..n_a {
                    g_ls[i] += d_cov[(i, i)] * 2.0 * (2.0 * log_std[i]).exp();
                }
            }
            (NoiseParams::Matrices(m), NoiseParams::Matrices(gm)) => {
                let s = eval.std.as_ref().expect("matrix noise evaluation carries std");
                let stop = cfg.stop_variance_gradient;
                let alpha2 = cfg.alpha * cfg.alpha;
                let x2 = x.map(|v| v * v);
                let n_x = x.len();

                // Σ = Diag(u) + α² W Diag(v) Wᵀ + γI
                let d_u = d_cov.diagonal();
                let d_v = if alpha2 != 0.0 {
                    let gw = &d_cov * &self.head.weight;
                    DVector::from_fn(n_x, |k, _| {
                        alpha2 * self.head.weight.column(k).dot(&gw.column(k))
                    })
                } else {
                    DVector::zeros(n_x)
                };

                if !stop && alpha2 != 0.0 {
                    let (_, v) = exploration::variance_terms(x, &s.dist_x, &s.dist_a);
                    let gw = &d_cov * &self.head.weight;
                    for k in 0..n_x {
                        let scale = 2.0 * alpha2 * v[k];
                        for i in 0..n_a {
                            g.head.weight[(i, k)] += scale * gw[(i, k)];
                        }
                    }
                }

                let in_bounds = |raw: f64| raw >= cfg.std_min && raw <= cfg.std_max;
                // u_i = Σ_j Sa_ij² x_j², ∂S/∂log S = S inside the clip range, 0 outside.
                for i in 0..n_a {
                    for j in 0..n_x {
                        let sa = s.dist_a[(i, j)];
                        if m.learn_a && in_bounds(s.sample_a[(i, j)]) {
                            let row = if m.full { i } else { 0 };
                            gm.log_std_a[(row, j)] += d_u[i] * 2.0 * sa * sa * x2[j];
                        }
                        if !stop {
                            d_x[j] += d_u[i] * sa * sa * 2.0 * x[j];
                        }
                    }
                }
                if alpha2 != 0.0 {
                    for k in 0..n_x {
                        for j in 0..n_x {
                            let sx = s.dist_x[(k, j)];
                            if m.learn_x && in_bounds(s.sample_x[(k, j)]) {
                                let row = if m.full { k } else { 0 };
                                gm.log_std_x[(row, j)] += d_v[k] * 2.0 * sx * sx * x2[j];
                            }
                            if !stop {
                                d_x[j] += d_v[k] * sx * sx * 2.0 * x[j];
                            }
                        }
                    }
                }
            }
            _ => unreachable!("gradient tape layout differs from policy"),
        }

        self.body.backward(&eval.forward.trace, &d_x, &mut g.body);
    }

    /// `log π(a|s)`, accumulating `∂log π/∂θ` into `tape`.
    pub fn log_prob_and_grad(
        &self,
        obs: &[f64],
        action: &[f64],
        cfg: &LatticeConfig,
        tape: &mut GradientTape,
    ) -> Result<f64> {
        let eval = self.evaluate(obs, action, cfg)?;
        self.backward(&eval, cfg, 1.0, 0.0, tape);
        Ok(eval.log_prob)
    }

    pub fn parameter_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.body.slices();
        v.push(self.head.weight.as_slice());
        v.push(self.head.bias.as_slice());
        v.extend(self.noise.slices());
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.body.slices_mut();
        v.push(self.head.weight.as_mut_slice());
        v.push(self.head.bias.as_mut_slice());
        v.extend(self.noise.slices_mut());
        v
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        load_flat(self.slices_mut(), flat)
    }
}

fn initial_noise(layout: &PolicyLayout, init_log_std: f64) -> NoiseParams {
    match layout.noise_matrices {
        None => NoiseParams::Diagonal {
            log_std: DVector::from_element(layout.action_dim, init_log_std),
        },
        Some(full) => NoiseParams::Matrices(NoiseStdMatrices::new(
            layout.latent_dim(),
            layout.action_dim,
            init_log_std,
            full,
        )),
    }
}

fn load_flat(dst: Vec<&mut [f64]>, flat: &[f64]) -> Result<()> {
    let total: usize = dst.iter().map(|s| s.len()).sum();
    if total != flat.len() {
        return Err(Error::CheckpointCorrupt(format!(
            "expected {total} parameters, found {}",
            flat.len()
        )));
    }
    let mut off = 0;
    for s in dst {
        s.copy_from_slice(&flat[off..off + s.len()]);
        off += s.len();
    }
    Ok(())
}

/// Per-parameter gradient accumulators mirroring an [`MlpPolicy`].
#[derive(Clone, Debug)]
pub struct GradientTape {
    pub grads: MlpPolicy,
}

impl GradientTape {
    pub fn for_policy(policy: &MlpPolicy) -> Self {
        let mut grads = policy.clone();
        for s in grads.body.slices_mut() {
            s.fill(0.0);
        }
        grads.head.weight.fill(0.0);
        grads.head.bias.fill(0.0);
        grads.noise = policy.noise.zeroed();
        Self { grads }
    }

    pub fn zero(&mut self) {
        for s in self.grads.slices_mut() {
            s.fill(0.0);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.grads.to_flat()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// State-value network: same hidden shape as the actor, scalar output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub body: Mlp,
    pub head: Dense,
    obs_dim: usize,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let body = Mlp::new(obs_dim, hidden, activation, rng);
        let latent = hidden.last().copied().unwrap_or(obs_dim);
        let head = Dense::orthogonal(latent, 1, 1.0, rng);
        Self { body, head, obs_dim }
    }

    pub fn zeros(obs_dim: usize, hidden: &[usize], activation: Activation) -> Self {
        let latent = hidden.last().copied().unwrap_or(obs_dim);
        Self {
            body: Mlp::zeros(obs_dim, hidden, activation),
            head: Dense::zeros(latent, 1),
            obs_dim,
        }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.value_traced(obs)?.0)
    }

    pub fn value_traced(&self, obs: &[f64]) -> Result<(f64, MlpTrace)> {
        if obs.len() != self.obs_dim {
            return Err(Error::dims("value forward: observation", self.obs_dim, obs.len()));
        }
        let trace = self.body.forward(&DVector::from_column_slice(obs));
        let v = self.head.forward(&trace.output)[0];
        Ok((v, trace))
    }

    /// Accumulates `d_value · ∂V/∂θ` into `grads`.
    pub fn backward(&self, trace: &MlpTrace, d_value: f64, grads: &mut ValueNet) {
        let d = DVector::from_element(1, d_value);
        grads.head.weight.ger(1.0, &d, &trace.output, 1.0);
        grads.head.bias[0] += d_value;
        let d_x = self.head.weight.tr_mul(&d);
        self.body.backward(trace, &d_x, &mut grads.body);
    }

    pub fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.body.slices();
        v.push(self.head.weight.as_slice());
        v.push(self.head.bias.as_slice());
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.body.slices_mut();
        v.push(self.head.weight.as_mut_slice());
        v.push(self.head.bias.as_mut_slice());
        v
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        load_flat(self.slices_mut(), flat)
    }
}
