//! Training loops for the sparse GP models.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{initial_log_beta, nn_fit};
use crate::config::{ModelConfig, ModelKind, TrainingConfig};
use crate::data::kmeans;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelParams;
use crate::mean::MeanFunction;
use crate::predictive::PredictTarget;
use crate::scalar::Real;
use crate::svgp::{InducingSet, SvgpModel};
use crate::training::{svi_step_size, AdamHyper, AdamState, EarlyStopDecision, EarlyStopState};

/// Optimizer settings shared by every training loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub minibatch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamHyper,
}

impl FitOptions {
    pub fn from_training(cfg: &TrainingConfig) -> Self {
        FitOptions {
            minibatch: cfg.minibatch,
            max_epochs: cfg.max_epochs,
            patience: cfg.patience,
            adam: cfg.adam.hyper(),
        }
    }

    pub fn pretraining(cfg: &TrainingConfig) -> Self {
        FitOptions {
            max_epochs: cfg.pretrain_epochs,
            ..Self::from_training(cfg)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training objective: the bound estimate (sparse GP) or the
    /// log-likelihood (network).
    pub objective: f64,
    pub valid_loglik: f64,
    pub skipped_batches: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
    pub pretrain: Option<Box<FitTrace>>,
}

/// Shuffled index chunks covering `0..n` once.
pub fn minibatches<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub elbo_estimate: f64,
    pub skipped_batches: usize,
}

/// Alternating natural-gradient / Adam optimizer over one training set.
pub struct SvgpTrainer<'a, T: Real> {
    pub model: SvgpModel<T>,
    data: &'a Dataset<T>,
    adam: AdamState<T>,
    minibatch: usize,
    optimize_z: bool,
    rng: ChaCha8Rng,
}

impl<'a, T: Real> SvgpTrainer<'a, T> {
    pub fn new(model: SvgpModel<T>, data: &'a Dataset<T>, opts: &FitOptions, optimize_z: bool, seed: u64) -> Self {
        let adam = AdamState::new(model.num_hyper_params(optimize_z), opts.adam);
        SvgpTrainer {
            model,
            data,
            adam,
            minibatch: opts.minibatch,
            optimize_z,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// One pass over the data: per minibatch, a natural-gradient step with
    /// the epoch's step size, then one Adam step on the hyperparameters.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochStats> {
        let n = self.data.len();
        let step = T::lit(svi_step_size(epoch));
        let batches = minibatches(n, self.minibatch, &mut self.rng);
        let mut elbo_sum = 0.0;
        let mut counted = 0usize;
        let mut skipped = 0usize;
        for batch in &batches {
            let sub = self.data.select(batch);
            let scale = T::from_usize_lossy(n) / T::from_usize_lossy(batch.len());
            self.model.natgrad_update(&sub.x, &sub.y, step, scale)?;
            let (value, grad) = self.model.elbo_and_hyper_grad(&sub.x, &sub.y, scale, self.optimize_z)?;
            let mut params = self.model.hyper_params(self.optimize_z);
            match self.adam.ascend(&mut params, &grad.flatten()) {
                Ok(()) => {
                    let mut candidate = self.model.clone();
                    candidate.set_hyper_params(&params, self.optimize_z)?;
                    self.model = candidate;
                }
                Err(Error::NonFiniteGradient) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
            if value.finite() {
                elbo_sum += value.to_f64_lossy();
                counted += 1;
            }
        }
        Ok(EpochStats {
            elbo_estimate: if counted > 0 { elbo_sum / counted as f64 } else { f64::NAN },
            skipped_batches: skipped,
        })
    }
}

/// Mean predictive log density of `y*` on a dataset.
pub fn mean_predictive_loglik<T: Real>(model: &SvgpModel<T>, data: &Dataset<T>) -> Result<f64> {
    let pred = model.predict(&data.x, PredictTarget::YStar)?;
    let ld = pred.log_density(&data.y);
    Ok(ld.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / data.len() as f64)
}

#[derive(Clone, Debug)]
pub struct SvgpFit<T: Real> {
    pub model: SvgpModel<T>,
    pub trace: FitTrace,
}

/// Builds the initial model: mean function (pretrained for the proposed
/// method), k-means inducing inputs, noise from the mean's residuals, and
/// `q(u)` at the prior.
pub fn initial_model<T: Real>(
    train: &Dataset<T>,
    valid: &Dataset<T>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainingConfig,
    seed: u64,
    trace: &mut FitTrace,
) -> Result<SvgpModel<T>> {
    let n = train.len();
    // pretraining shares the seed of the standalone network baseline
    let mean = match model_cfg.kind {
        ModelKind::Proposed => {
            let pre = nn_fit(train, valid, model_cfg.mlp.hidden, &FitOptions::pretraining(train_cfg), seed)?;
            trace.pretrain = Some(Box::new(pre.trace));
            MeanFunction::Mlp(pre.model.mlp)
        }
        ModelKind::Gp => MeanFunction::Zero,
        ModelKind::Nn => {
            return Err(Error::Config("the nn model is not a sparse GP; use nn_fit".into()));
        }
    };

    let mut m = model_cfg.inducing.m;
    if m > n {
        trace
            .warnings
            .push(format!("{m} inducing points requested but only {n} training rows; using {n}"));
        m = n;
    }
    let x64 = train.x.map(|v| v.to_f64_lossy());
    let centers = kmeans(&x64, m, seed.wrapping_add(2));
    let z = DMatrix::from_fn(centers.nrows(), centers.ncols(), |i, j| T::lit(centers[(i, j)]));

    let dim = train.dim();
    let alpha0 = model_cfg.kernel.alpha0.unwrap_or(1.0);
    let gamma0 = model_cfg.kernel.gamma0.unwrap_or(1.0 / dim.max(1) as f64);
    let kernel = KernelParams::new(T::lit(alpha0), T::lit(gamma0));

    let g = mean.forward(&train.x)?;
    let mse = (&train.y - g).norm_squared().to_f64_lossy() / n as f64;
    SvgpModel::with_prior_state(InducingSet::new(z)?, kernel, mean, T::lit(initial_log_beta(mse)))
}

/// Full training pipeline for the proposed method and the zero-mean GP.
pub fn fit<T: Real>(
    train: &Dataset<T>,
    valid: &Dataset<T>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainingConfig,
    seed: u64,
) -> Result<SvgpFit<T>> {
    if train.is_empty() {
        return Err(Error::EmptyTable);
    }
    if valid.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let mut trace = FitTrace::default();
    let model = initial_model(train, valid, model_cfg, train_cfg, seed, &mut trace)?;
    let opts = FitOptions::from_training(train_cfg);
    let mut trainer = SvgpTrainer::new(model, train, &opts, model_cfg.inducing.optimize_z, seed.wrapping_add(3));
    let mut stopper = EarlyStopState::new(opts.patience);

    for epoch in 0..opts.max_epochs {
        let stats = trainer.run_epoch(epoch)?;
        let valid_loglik = mean_predictive_loglik(&trainer.model, valid)?;
        trace.epochs.push(EpochRecord {
            epoch,
            objective: stats.elbo_estimate,
            valid_loglik,
            skipped_batches: stats.skipped_batches,
        });
        let score = if valid_loglik.is_finite() { valid_loglik } else { f64::NEG_INFINITY };
        if let EarlyStopDecision::Stop(_) = stopper.update(score, &trainer.model) {
            trace.stopped_early = true;
            break;
        }
    }
    trace.best_epoch = stopper.best_epoch;
    let model = stopper.into_best().unwrap_or(trainer.model);
    Ok(SvgpFit { model, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn toy(n: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::<f64>::from_fn(n, 1, |_, _| rng.random_range(-3.0..3.0));
        let y = DVector::from_fn(n, |i, _| (1.5 * x[(i, 0)]).sin() + 0.1 * rng.random_range(-1.0..1.0));
        Dataset::new(x, y).unwrap()
    }

    fn small_cfg(kind: ModelKind) -> (ModelConfig, TrainingConfig) {
        let mut m = ModelConfig::default();
        m.kind = kind;
        m.inducing.m = 10;
        let t = TrainingConfig {
            minibatch: 16,
            max_epochs: 30,
            patience: 5,
            pretrain_epochs: 30,
            ..Default::default()
        };
        (m, t)
    }

    #[test]
    fn minibatches_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = minibatches(130, 64, &mut rng);
        assert_eq!(b.len(), 3);
        assert_eq!(b[2].len(), 2);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..130).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_given_seed() {
        let train = toy(60, 1);
        let valid = toy(15, 2);
        let (m, t) = small_cfg(ModelKind::Proposed);
        let a = fit(&train, &valid, &m, &t, 5).unwrap();
        let b = fit(&train, &valid, &m, &t, 5).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model.hyper_params(true), b.model.hyper_params(true));
        assert_eq!(a.model.variational, b.model.variational);
    }

    #[test]
    fn inducing_count_clamped() {
        let train = toy(8, 3);
        let valid = toy(4, 4);
        let (mut m, t) = small_cfg(ModelKind::Gp);
        m.inducing.m = 50;
        let out = fit(&train, &valid, &m, &t, 1).unwrap();
        assert_eq!(out.model.num_inducing(), 8);
        assert_eq!(out.trace.warnings.len(), 1);
        assert!(out.model.mean.is_zero());
    }

    #[test]
    fn best_snapshot_returned() {
        let train = toy(50, 5);
        let valid = toy(20, 6);
        let (m, t) = small_cfg(ModelKind::Gp);
        let out = fit(&train, &valid, &m, &t, 2).unwrap();
        let best = out.trace.best_epoch.unwrap();
        let best_ll = out.trace.epochs[best].valid_loglik;
        assert!(out.trace.epochs.iter().all(|e| e.valid_loglik <= best_ll));
        let ll = mean_predictive_loglik(&out.model, &valid).unwrap();
        assert!((ll - best_ll).abs() < 1e-12);
    }

    #[test]
    fn nn_kind_rejected() {
        let train = toy(20, 7);
        let (m, t) = small_cfg(ModelKind::Nn);
        assert!(matches!(fit(&train, &train, &m, &t, 0), Err(Error::Config(_))));
    }
}
