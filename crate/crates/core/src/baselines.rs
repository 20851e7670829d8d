//! Comparison methods: a maximum-likelihood network with a single noise
//! precision, and the zero-mean sparse GP configuration.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, ModelKind};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fit::{minibatches, EpochRecord, FitOptions, FitTrace};
use crate::mean::Mlp;
use crate::predictive::{PredictTarget, PredictiveDist};
use crate::scalar::Real;
use crate::training::{AdamState, EarlyStopDecision, EarlyStopState};

#[derive(Clone, Debug, PartialEq)]
pub struct NnRegressor<T: Real> {
    pub mlp: Mlp<T>,
    pub log_beta: T,
}

impl<T: Real> NnRegressor<T> {
    pub fn beta(&self) -> T {
        self.log_beta.exp()
    }

    fn params(&self) -> Vec<T> {
        let mut p = self.mlp.params();
        p.push(self.log_beta);
        p
    }

    fn set_params(&mut self, flat: &[T]) -> Result<()> {
        let (last, rest) = flat.split_last().ok_or(Error::DimensionMismatch {
            expected: self.mlp.num_params() + 1,
            got: 0,
        })?;
        self.mlp.set_params(rest)?;
        self.log_beta = *last;
        Ok(())
    }

    /// `sum_n log N(y_n | g(x_n), 1/beta)`, scaled.
    pub fn loglik(&self, data: &Dataset<T>, scale: T) -> Result<T> {
        let g = self.mlp.forward(&data.x)?;
        let half = T::lit(0.5);
        let ln2pi = T::lit((2.0 * std::f64::consts::PI).ln());
        let beta = self.beta();
        let total = data
            .y
            .iter()
            .zip(g.iter())
            .fold(T::zero(), |acc, (y, g)| {
                let r = *y - *g;
                acc + half * (self.log_beta - ln2pi) - half * beta * r * r
            });
        Ok(scale * total)
    }

    /// Gradient of [`loglik`](Self::loglik) in `[mlp params..., log_beta]` layout.
    pub fn loglik_grad(&self, x: &DMatrix<T>, y: &DVector<T>, scale: T) -> Result<Vec<T>> {
        let g = self.mlp.forward(x)?;
        let beta = self.beta();
        let r = y - g;
        let upstream = &r * (scale * beta);
        let mut grad = self.mlp.backward(x, &upstream)?;
        let half = T::lit(0.5);
        let d_log_beta = r.iter().fold(T::zero(), |acc, r| acc + half - half * beta * *r * *r);
        grad.push(scale * d_log_beta);
        Ok(grad)
    }

    pub fn mean_loglik(&self, data: &Dataset<T>) -> Result<T> {
        Ok(self.loglik(data, T::one())? / T::from_usize_lossy(data.len()))
    }

    pub fn mse(&self, data: &Dataset<T>) -> Result<T> {
        let g = self.mlp.forward(&data.x)?;
        Ok((&data.y - g).norm_squared() / T::from_usize_lossy(data.len()))
    }
}

/// Output of [`nn_fit`].
#[derive(Clone, Debug)]
pub struct NnFit<T: Real> {
    pub model: NnRegressor<T>,
    pub trace: FitTrace,
}

/// Minibatch Adam on `(phi, log beta)` with early stopping on the
/// validation log-likelihood.
pub fn nn_fit<T: Real>(
    train: &Dataset<T>,
    valid: &Dataset<T>,
    hidden: usize,
    opts: &FitOptions,
    seed: u64,
) -> Result<NnFit<T>> {
    if train.is_empty() {
        return Err(Error::EmptyTable);
    }
    if valid.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mlp = Mlp::init(train.dim(), hidden, &mut rng);
    let g0 = mlp.forward(&train.x)?;
    let mse0 = (&train.y - g0).norm_squared().to_f64_lossy() / train.len() as f64;
    let mut model = NnRegressor {
        mlp,
        log_beta: T::lit(initial_log_beta(mse0)),
    };

    let mut params = model.params();
    let mut adam = AdamState::new(params.len(), opts.adam);
    let mut stopper = EarlyStopState::new(opts.patience);
    let mut trace = FitTrace::default();
    let n = train.len();

    for epoch in 0..opts.max_epochs {
        let mut skipped = 0;
        for batch in minibatches(n, opts.minibatch, &mut rng) {
            let sub = train.select(&batch);
            let scale = T::from_usize_lossy(n) / T::from_usize_lossy(batch.len());
            let grad = model.loglik_grad(&sub.x, &sub.y, scale)?;
            match adam.ascend(&mut params, &grad) {
                Ok(()) => model.set_params(&params)?,
                Err(Error::NonFiniteGradient) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        let objective = model.loglik(train, T::one())?.to_f64_lossy();
        let valid_loglik = model.mean_loglik(valid)?.to_f64_lossy();
        trace.epochs.push(EpochRecord {
            epoch,
            objective,
            valid_loglik,
            skipped_batches: skipped,
        });
        let score = if valid_loglik.is_finite() { valid_loglik } else { f64::NEG_INFINITY };
        if let EarlyStopDecision::Stop(_) = stopper.update(score, &model) {
            trace.stopped_early = true;
            break;
        }
    }
    trace.best_epoch = stopper.best_epoch;
    let model = stopper.into_best().unwrap_or(model);
    Ok(NnFit { model, trace })
}

/// Log of the precision that matches the given residual mean square.
pub(crate) fn initial_log_beta(mse: f64) -> f64 {
    let beta = if mse > 0.0 && mse.is_finite() { 1.0 / mse } else { 1.0 };
    beta.clamp(1e-6, 1e6).ln()
}

/// Mean `g(x*)`, constant variance `1 / beta`.
pub fn nn_predict<T: Real>(model: &NnRegressor<T>, x_star: &DMatrix<T>) -> Result<PredictiveDist<T>> {
    let mean = model.mlp.forward(x_star)?;
    let var = DVector::from_element(mean.len(), T::one() / model.beta());
    Ok(PredictiveDist {
        mean,
        var,
        target: PredictTarget::YStar,
    })
}

/// The zero-mean sparse GP baseline: `base` with the mean function removed.
pub fn zero_mean_svgp_config(base: &ModelConfig) -> ModelConfig {
    ModelConfig {
        kind: ModelKind::Gp,
        ..base.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::AdamHyper;
    use rand::Rng;

    fn opts(lr: f64, max_epochs: usize, minibatch: usize) -> FitOptions {
        FitOptions {
            minibatch,
            max_epochs,
            patience: max_epochs,
            adam: AdamHyper::with_lr(lr),
        }
    }

    #[test]
    fn constant_targets_fit_through_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::<f64>::from_fn(80, 2, |_, _| rng.random_range(-1.0..1.0));
        let data = Dataset::new(x, DVector::from_element(80, 1.7f64)).unwrap();
        let valid = data.select(&(0..10).collect::<Vec<_>>());
        let fit = nn_fit(&data, &valid, 5, &opts(1e-2, 400, 16), 3).unwrap();
        let g = fit.model.mlp.forward(&data.x).unwrap();
        assert!(g.iter().all(|v| (v - 1.7).abs() <= 0.01), "max dev {}", g.add_scalar(-1.7).amax());
    }

    #[test]
    fn precision_gradient_vanishes_at_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::<f64>::from_fn(30, 1, |_, _| rng.random_range(-2.0..2.0));
        let y = x.column(0).map(|v| v.sin() + 0.1);
        let data = Dataset::new(x, y).unwrap();
        let mut model = NnRegressor {
            mlp: Mlp::init(1, 5, &mut rng),
            log_beta: 0.0,
        };
        model.log_beta = -model.mse(&data).unwrap().ln();
        let g = model.loglik_grad(&data.x, &data.y, 1.0).unwrap();
        assert!(g.last().unwrap().abs() < 1e-10);
    }

    #[test]
    fn fitted_precision_matches_training_mse() {
        // full batch, so the optimizer converges to a stationary point
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::<f64>::from_fn(40, 1, |_, _| rng.random_range(-3.0..3.0));
        let y = DVector::from_fn(40, |i, _| x[(i, 0)].sin() + rng.random_range(-0.3..0.3));
        let data = Dataset::new(x, y).unwrap();
        let fit = nn_fit(&data, &data, 5, &opts(1e-2, 3000, 40), 7).unwrap();
        let mse = fit.model.mse(&data).unwrap();
        let inv_beta = 1.0 / fit.model.beta();
        assert!((inv_beta - mse).abs() <= 1e-3 * mse, "1/beta={inv_beta} mse={mse}");
    }

    #[test]
    fn learns_sine() {
        let x = DMatrix::from_fn(200, 1, |i, _| -3.0 + 6.0 * i as f64 / 199.0);
        let y = x.column(0).map(f64::sin);
        let data = Dataset::new(x, y).unwrap();
        let idx: Vec<usize> = (0..200).step_by(7).collect();
        let valid = data.select(&idx);
        let fit = nn_fit(&data, &valid, 5, &opts(1e-2, 1500, 32), 11).unwrap();
        let mse = fit.model.mse(&data).unwrap();
        assert!(mse < 0.01, "train mse {mse}");
    }

    #[test]
    fn constant_predictive_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = NnRegressor {
            mlp: Mlp::<f64>::init(3, 5, &mut rng),
            log_beta: 1.3,
        };
        let xs = DMatrix::from_fn(25, 3, |_, _| rng.random_range(-50.0..50.0));
        let p = nn_predict(&model, &xs).unwrap();
        assert_eq!(p.var.max() - p.var.min(), 0.0);
        assert_eq!(p.mean, model.mlp.forward(&xs).unwrap());
        let (lo, hi) = p.interval95();
        let half = 1.96 * (-1.3f64).exp().sqrt();
        assert!(((hi[0] - lo[0]) / 2.0 - half).abs() < 1e-12);
    }

    #[test]
    fn reproducible_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = DMatrix::from_fn(50, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(50, |_, _| rng.random_range(-1.0..1.0));
        let data = Dataset::new(x, y).unwrap();
        let valid = data.select(&[0, 1, 2, 3, 4]);
        let a = nn_fit(&data, &valid, 5, &opts(1e-3, 30, 8), 9).unwrap();
        let b = nn_fit(&data, &valid, 5, &opts(1e-3, 30, 8), 9).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn zero_mean_config_only_changes_kind() {
        let base = ModelConfig::default();
        let gp = zero_mean_svgp_config(&base);
        assert_eq!(gp.kind, ModelKind::Gp);
        assert_eq!(gp.inducing, base.inducing);
        assert_eq!(gp.kernel, base.kernel);
    }
}
