//! Positive-definite factorizations with a deterministic jitter schedule.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Diagonal jitter escalation used when a plain Cholesky fails.
///
/// Levels are `0`, then `start_rel * mean(diag)`, multiplied by `factor`
/// until `max_rel * mean(diag)` is reached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterPolicy {
    pub start_rel: f64,
    pub max_rel: f64,
    pub factor: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy {
            start_rel: 1e-10,
            max_rel: 1e-2,
            factor: 10.0,
        }
    }
}

impl JitterPolicy {
    /// No jitter at all: the matrix must factor as given.
    pub fn none() -> Self {
        JitterPolicy {
            start_rel: 0.0,
            max_rel: 0.0,
            factor: 10.0,
        }
    }

    fn levels(&self, scale: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        if self.start_rel <= 0.0 || !(scale > 0.0) {
            return out;
        }
        let mut rel = self.start_rel;
        // small slack so 1e-10 * 10^8 lands on 1e-2 despite rounding
        while rel <= self.max_rel * (1.0 + 1e-9) {
            out.push(rel * scale);
            rel *= self.factor;
        }
        out
    }
}

/// Lower Cholesky factor of `A + jitter * I`.
#[derive(Clone, Debug)]
pub struct PsdFactor<T: Real> {
    lower: DMatrix<T>,
    jitter_used: T,
}

impl<T: Real> PsdFactor<T> {
    pub fn lower(&self) -> &DMatrix<T> {
        &self.lower
    }

    pub fn jitter_used(&self) -> T {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `(A + jitter I) X = B` with two triangular solves.
    pub fn solve(&self, b: &DMatrix<T>) -> Result<DMatrix<T>> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: b.nrows(),
            });
        }
        let y = self
            .lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a nonzero diagonal");
        Ok(self
            .lower
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a nonzero diagonal"))
    }

    pub fn solve_vec(&self, b: &DVector<T>) -> Result<DVector<T>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: b.len(),
            });
        }
        let y = self
            .lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a nonzero diagonal");
        Ok(self
            .lower
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a nonzero diagonal"))
    }

    /// `L^{-1} B`, the half solve.
    pub fn solve_lower(&self, b: &DMatrix<T>) -> Result<DMatrix<T>> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: b.nrows(),
            });
        }
        Ok(self
            .lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a nonzero diagonal"))
    }

    /// Explicit inverse of the factored matrix, symmetrized.
    pub fn inverse(&self) -> DMatrix<T> {
        let n = self.dim();
        let inv = self
            .solve(&DMatrix::identity(n, n))
            .expect("identity has matching dimension");
        symmetrize(&inv)
    }

    /// Reconstructs `L L^T`.
    pub fn reconstruct(&self) -> DMatrix<T> {
        &self.lower * self.lower.transpose()
    }

    pub fn logdet(&self) -> T {
        logdet(self)
    }
}

/// Factors a symmetric matrix, escalating diagonal jitter per `policy`.
pub fn chol_psd<T: Real>(a: &DMatrix<T>, policy: &JitterPolicy) -> Result<PsdFactor<T>> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(Error::NonSquare { rows, cols });
    }
    let max_abs = a.iter().fold(0.0f64, |acc, v| acc.max(v.to_f64_lossy().abs()));
    let asym = max_asymmetry(a);
    let tol = 1e-8f64.max(100.0 * T::default_epsilon().to_f64_lossy());
    if asym > tol * max_abs.max(f64::MIN_POSITIVE) {
        return Err(Error::NonSymmetric(asym));
    }
    if rows == 0 {
        return Ok(PsdFactor {
            lower: DMatrix::zeros(0, 0),
            jitter_used: T::zero(),
        });
    }

    let mean_diag = a.diagonal().iter().map(|v| v.to_f64_lossy()).sum::<f64>() / rows as f64;
    let levels = policy.levels(mean_diag);
    for &jitter in &levels {
        let mut candidate = a.clone();
        let j = T::lit(jitter);
        for i in 0..rows {
            candidate[(i, i)] += j;
        }
        if let Some(chol) = nalgebra::Cholesky::new(candidate) {
            let lower = chol.unpack();
            let ok = lower
                .diagonal()
                .iter()
                .all(|d| *d > T::zero() && d.finite());
            if ok {
                return Ok(PsdFactor {
                    lower,
                    jitter_used: j,
                });
            }
        }
    }
    Err(Error::NotPositiveDefinite {
        max_jitter: *levels.last().unwrap_or(&0.0),
    })
}

/// Solves `A X = B` given the factor of `A`.
pub fn solve_psd<T: Real>(factor: &PsdFactor<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    factor.solve(b)
}

/// `log |A + jitter I| = 2 sum_i log L_ii`.
pub fn logdet<T: Real>(factor: &PsdFactor<T>) -> T {
    let two = T::lit(2.0);
    factor
        .lower
        .diagonal()
        .iter()
        .fold(T::zero(), |acc, d| acc + d.ln())
        * two
}

pub fn symmetrize<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    (a + a.transpose()) * half
}

fn max_asymmetry<T: Real>(a: &DMatrix<T>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).to_f64_lossy().abs());
        }
    }
    worst
}
