//! Dense multivariate normal with a cached Cholesky factor.
//!
//! Everything here works on `nalgebra` dynamic matrices but the factorization,
//! triangular solves and the symmetric eigen-solver are written out by hand so
//! that failure modes (non-positive pivot, stalled iteration) surface as
//! [`Error`] values rather than `None`.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Sweep cap for the Jacobi eigen-solver.
pub const MAX_EIGEN_SWEEPS: usize = 10_000;

/// Lower-triangular `L` with `L Lᵀ = cov`.
///
/// Only the lower triangle of `cov` is read.
pub fn cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::dims("cholesky (square)", n, cov.ncols()));
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = cov[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = cov[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `Lᵀ y = b` for lower-triangular `L`.
pub fn solve_upper_transposed(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// `(C + Cᵀ) / 2`.
pub fn symmetrize(cov: &DMatrix<f64>) -> DMatrix<f64> {
    (cov + cov.transpose()) * 0.5
}

#[derive(Clone, Debug)]
pub struct FullCovGaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl FullCovGaussian {
    /// Symmetrizes `cov` and factorizes it.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::dims("gaussian covariance", n, cov.nrows()));
        }
        let cov = symmetrize(&cov);
        let chol = cholesky(&cov)?;
        Ok(Self { mean, cov, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `log |cov|` from the Cholesky diagonal.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `cov⁻¹ v` via two triangular solves.
    pub fn precision_times(&self, v: &DVector<f64>) -> DVector<f64> {
        solve_upper_transposed(&self.chol, &solve_lower(&self.chol, v))
    }

    /// Dense `cov⁻¹`.
    pub fn precision(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.precision_times(&e));
        }
        symmetrize(&inv)
    }

    pub fn log_density(&self, a: &DVector<f64>) -> Result<f64> {
        let n = self.dim();
        if a.len() != n {
            return Err(Error::dims("log_density", n, a.len()));
        }
        let z = solve_lower(&self.chol, &(a - &self.mean));
        Ok(-0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * self.log_det() - 0.5 * z.norm_squared())
    }

    /// `½ log |2πe · cov|`.
    pub fn entropy(&self) -> f64 {
        0.5 * self.dim() as f64 * (2.0 * PI * E).ln() + 0.5 * self.log_det()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample(StandardNormal)));
        &self.mean + &self.chol * z
    }
}

/// Eigenvalues (descending) and matching eigenvector columns of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi eigen-decomposition.
pub fn symmetric_eigen(cov: &DMatrix<f64>) -> Result<SymmetricEigen> {
    symmetric_eigen_capped(cov, MAX_EIGEN_SWEEPS)
}

pub fn symmetric_eigen_capped(cov: &DMatrix<f64>, max_sweeps: usize) -> Result<SymmetricEigen> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::dims("symmetric_eigen (square)", n, cov.ncols()));
    }
    let mut a = symmetrize(cov);
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let off = |a: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&a) > 1e-15 * scale {
        if sweeps >= max_sweeps {
            return Err(Error::NoConvergence { iterations: sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(cov: &DMatrix<f64>) -> Result<f64> {
    let eig = symmetric_eigen(cov)?;
    Ok(eig.values.last().copied().unwrap_or(f64::NAN))
}
