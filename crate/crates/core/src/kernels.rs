//! RBF covariance `k(x, x') = alpha * exp(-gamma/2 * |x - x'|^2)`.
//!
//! Both parameters live in log space so gradient steps never leave the
//! positive orthant.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct KernelParams<T: Real> {
    pub log_alpha: T,
    pub log_gamma: T,
}

impl<T: Real> KernelParams<T> {
    pub fn new(alpha: T, gamma: T) -> Self {
        KernelParams {
            log_alpha: alpha.ln(),
            log_gamma: gamma.ln(),
        }
    }

    /// `alpha = 1`, `gamma = 1 / dim`.
    pub fn default_for_dim(dim: usize) -> Self {
        Self::new(T::one(), T::one() / T::from_usize_lossy(dim.max(1)))
    }

    pub fn alpha(&self) -> T {
        self.log_alpha.exp()
    }

    pub fn gamma(&self) -> T {
        self.log_gamma.exp()
    }

    fn from_sq_dist(&self, d2: T) -> T {
        self.alpha() * (-self.gamma() * T::lit(0.5) * d2).exp()
    }
}

fn sq_dist<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(x.iter()
        .zip(y)
        .fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b)))
}

pub fn k_eval<T: Real>(x: &[T], x_prime: &[T], params: &KernelParams<T>) -> Result<T> {
    Ok(params.from_sq_dist(sq_dist(x, x_prime)?))
}

/// Derivatives of `k(x, x')` with respect to `(log_alpha, log_gamma)`.
pub fn k_grad<T: Real>(x: &[T], x_prime: &[T], params: &KernelParams<T>) -> Result<(T, T)> {
    let d2 = sq_dist(x, x_prime)?;
    let k = params.from_sq_dist(d2);
    Ok((k, -params.gamma() * T::lit(0.5) * d2 * k))
}

/// Pairwise squared distances between the rows of `x1` and `x2`.
pub fn sq_dists<T: Real>(x1: &DMatrix<T>, x2: &DMatrix<T>) -> Result<DMatrix<T>> {
    if x1.ncols() != x2.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x1.ncols(),
            got: x2.ncols(),
        });
    }
    let (n1, n2, d) = (x1.nrows(), x2.nrows(), x1.ncols());
    let mut out = DMatrix::zeros(n1, n2);
    for j in 0..n2 {
        for i in 0..n1 {
            let mut acc = T::zero();
            for c in 0..d {
                let diff = x1[(i, c)] - x2[(j, c)];
                acc += diff * diff;
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

pub fn gram<T: Real>(x1: &DMatrix<T>, x2: &DMatrix<T>, params: &KernelParams<T>) -> Result<DMatrix<T>> {
    Ok(gram_from_sq_dists(&sq_dists(x1, x2)?, params))
}

pub fn gram_from_sq_dists<T: Real>(d2: &DMatrix<T>, params: &KernelParams<T>) -> DMatrix<T> {
    d2.map(|v| params.from_sq_dist(v))
}
