//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use lattice::config::{NetworkConfig, Strategy};
use lattice::exploration::LatticeConfig;
use lattice::policy::Activation;
use lattice::trainer::Agent;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `log N(a; μ, Σ)` through an explicit inverse and LU determinant.
pub fn direct_log_density(mean: &DVector<f64>, cov: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    let k = mean.len() as f64;
    let inv = cov.clone().try_inverse().expect("invertible");
    let r = a - mean;
    let quad = (r.transpose() * inv * &r)[(0, 0)];
    -0.5 * (k * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + quad)
}

/// Elementwise covariance from the definition:
/// `Σ_ij = δ_ij (Σ_k Sa_ik² x_k² + γ) + α² Σ_k W_ik W_jk Σ_l Sx_kl² x_l²`.
pub fn brute_covariance(
    x: &DVector<f64>,
    w: &DMatrix<f64>,
    s_x: &DMatrix<f64>,
    s_a: &DMatrix<f64>,
    alpha: f64,
    gamma: f64,
) -> DMatrix<f64> {
    let (n_a, n_x) = w.shape();
    let mut cov = DMatrix::zeros(n_a, n_a);
    let mut v = vec![0.0; n_x];
    for (k, vk) in v.iter_mut().enumerate() {
        for l in 0..n_x {
            *vk += s_x[(k, l)].powi(2) * x[l].powi(2);
        }
    }
    for i in 0..n_a {
        for j in 0..n_a {
            let mut c = 0.0;
            for k in 0..n_x {
                c += alpha * alpha * w[(i, k)] * w[(j, k)] * v[k];
            }
            if i == j {
                for k in 0..n_x {
                    c += s_a[(i, k)].powi(2) * x[k].powi(2);
                }
                c += gamma;
            }
            cov[(i, j)] = c;
        }
    }
    cov
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// Positive entries `exp(U(lo, hi))`.
pub fn random_std(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi).exp())
}

/// Central finite differences of `f` over every entry of `params`.
pub fn central_differences(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / ‖b‖`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

pub fn small_agent(obs: usize, hidden: &[usize], n_a: usize, strategy: Strategy, lattice: &LatticeConfig, seed: u64) -> Agent {
    let net = NetworkConfig {
        policy_hidden: hidden.to_vec(),
        value_hidden: hidden.to_vec(),
        activation: Activation::Tanh,
    };
    Agent::new(obs, n_a, &net, strategy, lattice, seed)
}

/// Composite Simpson weights on `n` (even) intervals over `[a, b]`.
pub fn simpson_nodes(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (a + i as f64 * h, w * h / 3.0)
        })
        .collect()
}
