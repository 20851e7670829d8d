//! Adam, the SVI step-size schedule, and validation-based early stopping.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<T: Real> {
    pub step_count: u64,
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub hyper: AdamHyper,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, hyper: AdamHyper) -> Self {
        AdamState {
            step_count: 0,
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
            hyper,
        }
    }

    /// One Adam step that *increases* the objective whose gradient is `grads`.
    ///
    /// Nothing is mutated when a gradient entry is non-finite.
    pub fn ascend(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::DimensionMismatch {
                expected: self.first_moment.len(),
                got: params.len(),
            });
        }
        if grads.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.finite()) {
            return Err(Error::NonFiniteGradient);
        }
        self.step_count += 1;
        let AdamHyper {
            lr,
            beta1,
            beta2,
            eps,
        } = self.hyper;
        let t = self.step_count as i32;
        let bias1 = T::lit(1.0 - beta1.powi(t));
        let bias2 = T::lit(1.0 - beta2.powi(t));
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (lr, eps) = (T::lit(lr), T::lit(eps));
        for i in 0..params.len() {
            // minimize -L
            let g = -grads[i];
            let m = b1 * self.first_moment[i] + (T::one() - b1) * g;
            let v = b2 * self.second_moment[i] + (T::one() - b2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / bias1;
            let v_hat = v / bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

pub fn adam_step<T: Real>(state: &mut AdamState<T>, params: &mut [T], grads: &[T]) -> Result<()> {
    state.ascend(params, grads)
}

/// `(t + 1)^-0.9`, indexed by epoch.
pub fn svi_step_size(epoch: usize) -> f64 {
    ((epoch + 1) as f64).powf(-0.9)
}

#[derive(Clone, Debug, PartialEq)]
pub enum EarlyStopDecision<P> {
    Continue,
    Stop(P),
}

/// Tracks the best validation score; a tie is not an improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopState<P> {
    pub best_valid_loglik: f64,
    pub best_params_snapshot: Option<P>,
    pub best_epoch: Option<usize>,
    pub epochs_since_best: usize,
    pub patience: usize,
    seen: usize,
}

impl<P: Clone> EarlyStopState<P> {
    pub fn new(patience: usize) -> Self {
        EarlyStopState {
            best_valid_loglik: f64::NEG_INFINITY,
            best_params_snapshot: None,
            best_epoch: None,
            epochs_since_best: 0,
            patience,
            seen: 0,
        }
    }

    pub fn update(&mut self, valid_loglik: f64, current: &P) -> EarlyStopDecision<P> {
        let epoch = self.seen;
        self.seen += 1;
        if valid_loglik > self.best_valid_loglik || self.best_params_snapshot.is_none() {
            self.best_valid_loglik = valid_loglik;
            self.best_params_snapshot = Some(current.clone());
            self.best_epoch = Some(epoch);
            self.epochs_since_best = 0;
            return EarlyStopDecision::Continue;
        }
        self.epochs_since_best += 1;
        if self.epochs_since_best > self.patience {
            EarlyStopDecision::Stop(self.best().expect("snapshot set on first update").clone())
        } else {
            EarlyStopDecision::Continue
        }
    }

    pub fn best(&self) -> Option<&P> {
        self.best_params_snapshot.as_ref()
    }

    pub fn into_best(self) -> Option<P> {
        self.best_params_snapshot
    }
}

pub fn early_stop_update<P: Clone>(
    state: &mut EarlyStopState<P>,
    valid_loglik: f64,
    current: &P,
) -> EarlyStopDecision<P> {
    state.update(valid_loglik, current)
}
