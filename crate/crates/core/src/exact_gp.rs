//! Dense GP regression with an arbitrary mean function.
//!
//! `O(N^3)`; used as the reference the sparse model is checked against.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{gram, KernelParams};
use crate::linalg::{chol_psd, JitterPolicy, PsdFactor};
use crate::mean::MeanFunction;
use crate::predictive::{PredictTarget, PredictiveDist};
use crate::scalar::Real;

/// Largest training set the dense oracle accepts.
pub const EXACT_GP_MAX_N: usize = 2000;

#[derive(Clone, Debug)]
pub struct ExactGpModel<T: Real> {
    pub x_train: DMatrix<T>,
    pub y_train: DVector<T>,
    pub kernel: KernelParams<T>,
    pub mean: MeanFunction<T>,
    pub beta: T,
}

struct Fitted<T: Real> {
    factor: PsdFactor<T>,
    residual: DVector<T>,
}

impl<T: Real> ExactGpModel<T> {
    pub fn new(data: &Dataset<T>, kernel: KernelParams<T>, mean: MeanFunction<T>, beta: T) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyTable);
        }
        if data.len() > EXACT_GP_MAX_N {
            return Err(Error::Config(format!(
                "exact GP limited to {EXACT_GP_MAX_N} points, got {}",
                data.len()
            )));
        }
        if !(beta > T::zero()) {
            return Err(Error::Config("noise precision must be positive".into()));
        }
        Ok(ExactGpModel {
            x_train: data.x.clone(),
            y_train: data.y.clone(),
            kernel,
            mean,
            beta,
        })
    }

    fn fitted(&self) -> Result<Fitted<T>> {
        let mut k = gram(&self.x_train, &self.x_train, &self.kernel)?;
        let noise = T::one() / self.beta;
        for i in 0..k.nrows() {
            k[(i, i)] += noise;
        }
        let factor = chol_psd(&k, &JitterPolicy::default())?;
        let g = self.mean.forward(&self.x_train)?;
        Ok(Fitted {
            factor,
            residual: &self.y_train - g,
        })
    }

    /// `log N(y | g, K + beta^-1 I)`.
    pub fn log_marginal(&self) -> Result<T> {
        let f = self.fitted()?;
        let alpha = f.factor.solve_vec(&f.residual)?;
        let n = T::from_usize_lossy(self.y_train.len());
        let half = T::lit(0.5);
        let ln2pi = T::lit((2.0 * std::f64::consts::PI).ln());
        Ok(-half * n * ln2pi - half * f.factor.logdet() - half * f.residual.dot(&alpha))
    }

    pub fn predict(&self, x_star: &DMatrix<T>, target: PredictTarget) -> Result<PredictiveDist<T>> {
        let f = self.fitted()?;
        let k_star = gram(&self.x_train, x_star, &self.kernel)?;
        let weights = f.factor.solve_vec(&f.residual)?;
        let g_star = self.mean.forward(x_star)?;
        let mean = g_star + k_star.transpose() * weights;
        let half = f.factor.solve_lower(&k_star)?;
        let alpha = self.kernel.alpha();
        let noise = match target {
            PredictTarget::YStar => T::one() / self.beta,
            PredictTarget::FStar => T::zero(),
        };
        let var = DVector::from_fn(x_star.nrows(), |j, _| {
            let explained = half.column(j).norm_squared();
            noise + (alpha - explained).max(T::zero())
        });
        Ok(PredictiveDist { mean, var, target })
    }
}

pub fn log_marginal<T: Real>(model: &ExactGpModel<T>) -> Result<T> {
    model.log_marginal()
}

pub fn exact_predict<T: Real>(model: &ExactGpModel<T>, x_star: &DMatrix<T>) -> Result<PredictiveDist<T>> {
    model.predict(x_star, PredictTarget::YStar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mean::Mlp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(x: DMatrix<f64>, y: DVector<f64>, kernel: KernelParams<f64>, mean: MeanFunction<f64>, beta: f64) -> ExactGpModel<f64> {
        ExactGpModel::new(&Dataset::new(x, y).unwrap(), kernel, mean, beta).unwrap()
    }

    #[test]
    fn scalar_closed_form() {
        let m = model(
            DMatrix::from_element(1, 1, 0.3),
            DVector::from_element(1, 0.0),
            KernelParams::<f64>::new(1.0, 1.0),
            MeanFunction::Zero,
            1.0,
        );
        let expected = -0.5 * (4.0 * std::f64::consts::PI).ln();
        assert!((m.log_marginal().unwrap() - expected).abs() < 1e-14);
        assert!((expected + 1.2655).abs() < 1e-4);
    }

    #[test]
    fn zero_residual_leaves_logdet_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::init(2, 5, &mut rng);
        let x = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = mlp.forward(&x).unwrap();
        let kp = KernelParams::<f64>::new(1.3, 0.8);
        let m = model(x.clone(), y, kp, MeanFunction::Mlp(mlp), 4.0);
        let mut k = gram(&x, &x, &kp).unwrap();
        for i in 0..5 {
            k[(i, i)] += 0.25;
        }
        let ld = chol_psd(&k, &JitterPolicy::none()).unwrap().logdet();
        let expected = -2.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * ld;
        assert!((m.log_marginal().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn two_point_explicit_inverse() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 0.8]);
        let y = DVector::from_vec(vec![0.7, -0.4]);
        let kp = KernelParams::<f64>::new(1.5, 2.0);
        let beta = 3.0;
        let m = model(x.clone(), y.clone(), kp, MeanFunction::Zero, beta);
        let k01 = 1.5 * (-0.5 * 2.0 * 0.64f64).exp();
        let (a, b, d) = (1.5 + 1.0 / beta, k01, 1.5 + 1.0 / beta);
        let det = a * d - b * b;
        let quad = (d * y[0] * y[0] - 2.0 * b * y[0] * y[1] + a * y[1] * y[1]) / det;
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad;
        assert!((m.log_marginal().unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn far_points_revert_to_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mlp = Mlp::init(1, 5, &mut rng);
        let x = DMatrix::from_row_slice(3, 1, &[-0.5, 0.1, 0.4]);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5]);
        let kp = KernelParams::<f64>::new(0.9, 1.0);
        let far = DMatrix::from_row_slice(1, 1, &[50.0]);

        let m = model(x.clone(), y.clone(), kp, MeanFunction::Mlp(mlp.clone()), 10.0);
        let p = exact_predict(&m, &far).unwrap();
        assert!((p.mean[0] - mlp.forward(&far).unwrap()[0]).abs() < 1e-12);
        assert!((p.var[0] - (0.1 + 0.9)).abs() < 1e-12);

        let z = model(x, y, kp, MeanFunction::Zero, 10.0);
        let p = exact_predict(&z, &far).unwrap();
        assert!(p.mean[0].abs() < 1e-12);
    }

    #[test]
    fn low_noise_interpolates() {
        let x = DMatrix::from_row_slice(3, 1, &[-1.0, 0.0, 1.2]);
        let y = DVector::from_vec(vec![0.3, -0.8, 1.1]);
        let m = model(x.clone(), y.clone(), KernelParams::<f64>::new(1.0, 1.0), MeanFunction::Zero, 1e6);
        let p = exact_predict(&m, &x).unwrap();
        for i in 0..3 {
            assert!((p.mean[i] - y[i]).abs() < 1e-2);
            assert!(p.var[i] > 0.0 && p.var[i] < 1e-5);
        }
    }

    #[test]
    fn variance_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let x = DMatrix::from_fn(12, 2, |_, _| rng.random_range(-2.0..2.0));
            let y = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
            let kp = KernelParams::<f64>::new(rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
            let beta = rng.random_range(1.0..50.0);
            let m = model(x, y, kp, MeanFunction::Zero, beta);
            let xs = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-4.0..4.0));
            let p = exact_predict(&m, &xs).unwrap();
            for v in p.var.iter() {
                assert!(*v > 0.0);
                assert!(*v <= 1.0 / beta + kp.alpha() + 1e-10);
            }
        }
    }
}
