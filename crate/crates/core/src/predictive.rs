use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictTarget {
    /// Noisy observation `y*`; includes the noise variance.
    YStar,
    /// Latent function value `f*`.
    FStar,
}

/// Independent Gaussian marginals at each test point.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDist<T: Real> {
    pub mean: DVector<T>,
    pub var: DVector<T>,
    pub target: PredictTarget,
}

/// 97.5% standard normal quantile.
pub const Z_975: f64 = 1.96;

impl<T: Real> PredictiveDist<T> {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `(lo, hi)` bounds of the central 95% interval per point.
    pub fn interval95(&self) -> (DVector<T>, DVector<T>) {
        let z = T::lit(Z_975);
        let half = self.var.map(|v| z * v.sqrt());
        (&self.mean - &half, &self.mean + &half)
    }

    /// Per-point `log N(y_n | mean_n, var_n)`.
    pub fn log_density(&self, y: &DVector<T>) -> DVector<T> {
        let ln2pi = T::lit((2.0 * std::f64::consts::PI).ln());
        let half = T::lit(0.5);
        DVector::from_fn(self.len(), |i, _| {
            let r = y[i] - self.mean[i];
            -half * (ln2pi + self.var[i].ln() + r * r / self.var[i])
        })
    }

    /// Maps a prediction made on standardized targets back to raw units.
    pub fn affine(&self, shift: T, scale: T) -> Self {
        PredictiveDist {
            mean: self.mean.map(|m| m * scale + shift),
            var: self.var.map(|v| v * scale * scale),
            target: self.target,
        }
    }
}
