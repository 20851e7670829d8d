//! Sparse variational GP with a learned mean function.
//!
//! `q(u) = N(m, S)` over the inducing outputs is kept in both moment and
//! natural form. The variational parameters are updated by natural-gradient
//! steps; kernel, noise and mean-function parameters by ordinary gradients
//! of the same lower bound.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{gram_from_sq_dists, sq_dists, KernelParams};
use crate::linalg::{chol_psd, symmetrize, JitterPolicy, PsdFactor};
use crate::mean::{mean_backward, MeanFunction};
use crate::predictive::{PredictTarget, PredictiveDist};
use crate::scalar::Real;

/// Values of `k_tilde` below this are treated as round-off and clamped to 0.
const K_TILDE_FLOOR: f64 = -1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct InducingSet<T: Real> {
    pub z: DMatrix<T>,
}

impl<T: Real> InducingSet<T> {
    pub fn new(z: DMatrix<T>) -> Result<Self> {
        if z.nrows() == 0 {
            return Err(Error::Config("at least one inducing input required".into()));
        }
        if z.iter().any(|v| !v.finite()) {
            return Err(Error::Config("inducing inputs must be finite".into()));
        }
        Ok(InducingSet { z })
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }
}

/// `q(u)` in moment `(m, S)` and natural `(S^-1 m, -S^-1 / 2)` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState<T: Real> {
    pub m: DVector<T>,
    pub s: DMatrix<T>,
    pub lambda1: DVector<T>,
    pub lambda2: DMatrix<T>,
}

pub fn nat_from_moments<T: Real>(m: &DVector<T>, s: &DMatrix<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    if m.len() != s.nrows() {
        return Err(Error::DimensionMismatch {
            expected: s.nrows(),
            got: m.len(),
        });
    }
    let f = chol_psd(s, &JitterPolicy::default())?;
    let lambda1 = f.solve_vec(m)?;
    let lambda2 = f.inverse() * T::lit(-0.5);
    Ok((lambda1, lambda2))
}

pub fn moments_from_nat<T: Real>(
    lambda1: &DVector<T>,
    lambda2: &DMatrix<T>,
) -> Result<(DVector<T>, DMatrix<T>)> {
    if lambda1.len() != lambda2.nrows() {
        return Err(Error::DimensionMismatch {
            expected: lambda2.nrows(),
            got: lambda1.len(),
        });
    }
    let precision = symmetrize(lambda2) * T::lit(-2.0);
    let f = chol_psd(&precision, &JitterPolicy::default())?;
    let m = f.solve_vec(lambda1)?;
    Ok((m, f.inverse()))
}

impl<T: Real> VariationalState<T> {
    pub fn from_moments(m: DVector<T>, s: DMatrix<T>) -> Result<Self> {
        let s = symmetrize(&s);
        let (lambda1, lambda2) = nat_from_moments(&m, &s)?;
        Ok(VariationalState {
            m,
            s,
            lambda1,
            lambda2,
        })
    }

    pub fn from_natural(lambda1: DVector<T>, lambda2: DMatrix<T>) -> Result<Self> {
        let lambda2 = symmetrize(&lambda2);
        let (m, s) = moments_from_nat(&lambda1, &lambda2)?;
        Ok(VariationalState {
            m,
            s,
            lambda1,
            lambda2,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Expectation parameters `(m, m m^T + S)`.
    pub fn expectation_params(&self) -> (DVector<T>, DMatrix<T>) {
        (self.m.clone(), &self.m * self.m.transpose() + &self.s)
    }
}

/// Per-point quantities of `p(f_n | u)` under `q(u)`.
#[derive(Clone, Debug)]
pub struct ConditionalMoments<T: Real> {
    /// `g(x_n) + k_Mn^T K_MM^-1 (c - g_M)` for the chosen center `c`.
    pub mean: DVector<T>,
    /// `k(x_n, x_n) - k_Mn^T K_MM^-1 k_Mn`, clamped at 0.
    pub k_tilde: DVector<T>,
    /// Column `n` is `K_MM^-1 k_Mn`; `Lambda_n = beta a_n a_n^T`.
    pub a: DMatrix<T>,
    pub k_mb: DMatrix<T>,
}

/// Which inducing-output vector the conditional mean is centred on.
#[derive(Clone, Copy, Debug)]
pub enum Center<'a, T: Real> {
    /// The variational mean `m`, giving `mu_tilde`.
    Variational,
    /// A specific draw `u`, giving `mu`.
    Values(&'a DVector<T>),
}

/// Gradients of the scaled bound with `(m, S)` held fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperGrad<T: Real> {
    pub mean: Vec<T>,
    pub log_alpha: T,
    pub log_gamma: T,
    pub log_beta: T,
    pub z: Option<DMatrix<T>>,
}

impl<T: Real> HyperGrad<T> {
    /// Same layout as [`SvgpModel::hyper_params`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = self.mean.clone();
        out.extend([self.log_alpha, self.log_gamma, self.log_beta]);
        if let Some(z) = &self.z {
            out.extend(row_major(z));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SvgpModel<T: Real> {
    pub inducing: InducingSet<T>,
    pub kernel: KernelParams<T>,
    pub mean: MeanFunction<T>,
    pub log_beta: T,
    pub variational: VariationalState<T>,
}

struct PriorTerms<T: Real> {
    kmm: DMatrix<T>,
    d2mm: DMatrix<T>,
    factor: PsdFactor<T>,
    g_m: DVector<T>,
}

struct BatchTerms<T: Real> {
    prior: PriorTerms<T>,
    kmb: DMatrix<T>,
    d2mb: DMatrix<T>,
    a: DMatrix<T>,
    g: DVector<T>,
    k_tilde: DVector<T>,
}

fn row_major<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    m.transpose().iter().copied().collect()
}

fn check_batch<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::Config("empty minibatch".into()));
    }
    Ok(())
}

/// `sum_n a_n^T B_n` for matching columns.
fn column_dots<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DVector<T> {
    DVector::from_fn(a.ncols(), |j, _| a.column(j).dot(&b.column(j)))
}

impl<T: Real> SvgpModel<T> {
    /// Model with `q(u)` set to the prior `N(g_M, K_MM)`.
    pub fn with_prior_state(
        inducing: InducingSet<T>,
        kernel: KernelParams<T>,
        mean: MeanFunction<T>,
        log_beta: T,
    ) -> Result<Self> {
        let d2 = sq_dists(&inducing.z, &inducing.z)?;
        let kmm = gram_from_sq_dists(&d2, &kernel);
        let g_m = mean.forward(&inducing.z)?;
        let variational = VariationalState::from_moments(g_m, kmm)?;
        Ok(SvgpModel {
            inducing,
            kernel,
            mean,
            log_beta,
            variational,
        })
    }

    pub fn beta(&self) -> T {
        self.log_beta.exp()
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inducing.z.ncols()
    }

    pub fn reset_to_prior(&mut self) -> Result<()> {
        let prior = self.prior_terms()?;
        self.variational = VariationalState::from_moments(prior.g_m, prior.kmm)?;
        Ok(())
    }

    fn prior_terms(&self) -> Result<PriorTerms<T>> {
        let d2mm = sq_dists(&self.inducing.z, &self.inducing.z)?;
        let kmm = gram_from_sq_dists(&d2mm, &self.kernel);
        let factor = chol_psd(&kmm, &JitterPolicy::default())?;
        let g_m = self.mean.forward(&self.inducing.z)?;
        Ok(PriorTerms {
            kmm,
            d2mm,
            factor,
            g_m,
        })
    }

    fn batch_terms(&self, x: &DMatrix<T>) -> Result<BatchTerms<T>> {
        let prior = self.prior_terms()?;
        let d2mb = sq_dists(&self.inducing.z, x)?;
        let kmb = gram_from_sq_dists(&d2mb, &self.kernel);
        let a = prior.factor.solve(&kmb)?;
        let g = self.mean.forward(x)?;
        let alpha = self.kernel.alpha();
        let explained = column_dots(&kmb, &a);
        let floor = T::lit(K_TILDE_FLOOR);
        let k_tilde = explained.map(|e| {
            let kt = alpha - e;
            if kt < T::zero() && kt >= floor {
                T::zero()
            } else {
                kt
            }
        });
        Ok(BatchTerms {
            prior,
            kmb,
            d2mb,
            a,
            g,
            k_tilde,
        })
    }

    pub fn conditional_moments(&self, x: &DMatrix<T>, center: Center<'_, T>) -> Result<ConditionalMoments<T>> {
        let b = self.batch_terms(x)?;
        let u = match center {
            Center::Variational => &self.variational.m,
            Center::Values(u) => u,
        };
        if u.len() != self.num_inducing() {
            return Err(Error::DimensionMismatch {
                expected: self.num_inducing(),
                got: u.len(),
            });
        }
        let d = u - &b.prior.g_m;
        let mean = &b.g + b.a.tr_mul(&d);
        Ok(ConditionalMoments {
            mean,
            k_tilde: b.k_tilde,
            a: b.a,
            k_mb: b.kmb,
        })
    }

    fn kl_with(&self, prior: &PriorTerms<T>) -> Result<T> {
        let q = &self.variational;
        let s_factor = chol_psd(&q.s, &JitterPolicy::default())?;
        let d = &q.m - &prior.g_m;
        let v = prior.factor.solve_vec(&d)?;
        let trace = prior.factor.solve(&q.s)?.trace();
        let m = T::from_usize_lossy(q.dim());
        Ok(T::lit(0.5) * (prior.factor.logdet() - s_factor.logdet() - m + trace + d.dot(&v)))
    }

    /// `KL(q(u) || p(u))`.
    pub fn kl_q_p(&self) -> Result<T> {
        let prior = self.prior_terms()?;
        self.kl_with(&prior)
    }

    /// `scale * sum_{n in batch} [log N(y_n | mu_n, 1/beta) - beta k_n / 2 - tr(S Lambda_n) / 2] - KL`.
    pub fn elbo(&self, x: &DMatrix<T>, y: &DVector<T>, scale: T) -> Result<T> {
        check_batch(x, y)?;
        let b = self.batch_terms(x)?;
        let data = self.data_term(&b, y)?;
        Ok(scale * data - self.kl_with(&b.prior)?)
    }

    fn data_term(&self, b: &BatchTerms<T>, y: &DVector<T>) -> Result<T> {
        let q = &self.variational;
        let beta = self.beta();
        let half = T::lit(0.5);
        let ln2pi = T::lit((2.0 * std::f64::consts::PI).ln());
        let d = &q.m - &b.prior.g_m;
        let mu = &b.g + b.a.tr_mul(&d);
        let sa = &q.s * &b.a;
        let quad = column_dots(&b.a, &sa);
        let mut total = T::zero();
        for n in 0..y.len() {
            let r = y[n] - mu[n];
            total += -half * ln2pi + half * self.log_beta
                - half * beta * r * r
                - half * beta * b.k_tilde[n]
                - half * beta * quad[n];
        }
        Ok(total)
    }

    /// Batch fixed point `(lambda1_hat, lambda2_hat)` of the natural-gradient update.
    pub fn natural_targets(&self, x: &DMatrix<T>, y: &DVector<T>, scale: T) -> Result<(DVector<T>, DMatrix<T>)> {
        check_batch(x, y)?;
        let b = self.batch_terms(x)?;
        let w = scale * self.beta();
        let aat = &b.a * b.a.transpose();
        let resid = y - &b.g;
        let prior_mean_term = b.prior.factor.solve_vec(&b.prior.g_m)?;
        let lambda1 = (&b.a * resid + &aat * &b.prior.g_m) * w + prior_mean_term;
        let lambda2 = (aat * w + b.prior.factor.inverse()) * T::lit(-0.5);
        Ok((lambda1, symmetrize(&lambda2)))
    }

    /// `lambda <- (1 - step) lambda + step * lambda_hat(batch)`.
    pub fn natgrad_update(&mut self, x: &DMatrix<T>, y: &DVector<T>, step: T, scale: T) -> Result<()> {
        if !(step > T::zero() && step <= T::one()) {
            return Err(Error::Config(format!("natural-gradient step {step} outside (0, 1]")));
        }
        let (l1_hat, l2_hat) = self.natural_targets(x, y, scale)?;
        let keep = T::one() - step;
        let q = &self.variational;
        let lambda1 = &q.lambda1 * keep + l1_hat * step;
        let lambda2 = &q.lambda2 * keep + l2_hat * step;
        self.variational = VariationalState::from_natural(lambda1, lambda2)?;
        Ok(())
    }

    /// Number of entries in the hyperparameter vector.
    pub fn num_hyper_params(&self, include_z: bool) -> usize {
        self.mean.num_params() + 3 + if include_z { self.inducing.z.len() } else { 0 }
    }

    /// `[mean params..., log_alpha, log_gamma, log_beta, Z (row-major)...]`.
    pub fn hyper_params(&self, include_z: bool) -> Vec<T> {
        let mut out = self.mean.params();
        out.extend([self.kernel.log_alpha, self.kernel.log_gamma, self.log_beta]);
        if include_z {
            out.extend(row_major(&self.inducing.z));
        }
        out
    }

    pub fn set_hyper_params(&mut self, flat: &[T], include_z: bool) -> Result<()> {
        let expected = self.num_hyper_params(include_z);
        if flat.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: flat.len(),
            });
        }
        let np = self.mean.num_params();
        self.mean.set_params(&flat[..np])?;
        self.kernel.log_alpha = flat[np];
        self.kernel.log_gamma = flat[np + 1];
        self.log_beta = flat[np + 2];
        if include_z {
            let (m, d) = self.inducing.z.shape();
            self.inducing.z = DMatrix::from_row_slice(m, d, &flat[np + 3..]);
        }
        Ok(())
    }

    /// Analytic gradient of [`elbo`](Self::elbo) with respect to the mean
    /// parameters, `log_alpha`, `log_gamma`, `log_beta` (and `Z` when
    /// `include_z`), holding `(m, S)` fixed. Also returns the bound itself.
    pub fn elbo_and_hyper_grad(
        &self,
        x: &DMatrix<T>,
        y: &DVector<T>,
        scale: T,
        include_z: bool,
    ) -> Result<(T, HyperGrad<T>)> {
        check_batch(x, y)?;
        let b = self.batch_terms(x)?;
        let q = &self.variational;
        let PriorTerms {
            kmm,
            d2mm,
            factor,
            g_m,
        } = &b.prior;
        let (alpha, gamma, beta) = (self.kernel.alpha(), self.kernel.gamma(), self.beta());
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let nb = y.len();

        let d = &q.m - g_m;
        let v = factor.solve_vec(&d)?;
        let mu = &b.g + b.a.tr_mul(&d);
        let r = y - &mu;
        let sa = &q.s * &b.a;
        let quad = column_dots(&b.a, &sa);
        let w = &r * (scale * beta);
        let c = -half * scale * beta;

        let kinv = factor.inverse();
        let ksa = factor.solve(&sa)?;
        let kinv_s_kinv = factor.solve(&q.s)? * &kinv;
        let aw = &b.a * &w;

        // dL/dK_MM (unsymmetrized; only contracted against symmetric perturbations)
        let g_mm = -(&aw * v.transpose()) + (&b.a * b.a.transpose()) * c
            - (&ksa * b.a.transpose()) * (two * c)
            - (&kinv - &kinv_s_kinv - &v * v.transpose()) * half;
        // dL/dK_Mb
        let g_mb = &v * w.transpose() - &b.a * (two * c) + &ksa * (two * c);

        // the jitter is relative to the diagonal, so it scales with alpha too
        let d_log_alpha = g_mm.component_mul(kmm).sum()
            + g_mm.trace() * factor.jitter_used()
            + g_mb.component_mul(&b.kmb).sum()
            + c * T::from_usize_lossy(nb) * alpha;
        let d_log_gamma = -gamma
            * half
            * (g_mm.component_mul(d2mm).component_mul(kmm).sum()
                + g_mb.component_mul(&b.d2mb).component_mul(&b.kmb).sum());

        let mut g_beta = T::zero();
        let mut data = T::zero();
        let ln2pi = T::lit((2.0 * std::f64::consts::PI).ln());
        for n in 0..nb {
            let rr = r[n] * r[n];
            g_beta += half / beta - half * (rr + b.k_tilde[n] + quad[n]);
            data += -half * ln2pi + half * self.log_beta - half * beta * (rr + b.k_tilde[n] + quad[n]);
        }
        let d_log_beta = beta * scale * g_beta;

        let g_gm = &v - &aw;
        let mean_grad = if self.mean.is_zero() {
            Vec::new()
        } else {
            let mut gx = mean_backward(&self.mean, x, &w)?;
            let gz = mean_backward(&self.mean, &self.inducing.z, &g_gm)?;
            for (a, b) in gx.iter_mut().zip(gz) {
                *a += b;
            }
            gx
        };

        let z_grad = if include_z {
            let z = &self.inducing.z;
            let (mm, dim) = z.shape();
            let mut gz = match &self.mean {
                MeanFunction::Mlp(mlp) => mlp.input_grad(z, &g_gm)?,
                MeanFunction::Zero => DMatrix::zeros(mm, dim),
            };
            for i in 0..mm {
                for j in 0..mm {
                    let coef = -gamma * (g_mm[(i, j)] + g_mm[(j, i)]) * kmm[(i, j)];
                    for k in 0..dim {
                        gz[(i, k)] += coef * (z[(i, k)] - z[(j, k)]);
                    }
                }
                for n in 0..nb {
                    let coef = -gamma * g_mb[(i, n)] * b.kmb[(i, n)];
                    for k in 0..dim {
                        gz[(i, k)] += coef * (z[(i, k)] - x[(n, k)]);
                    }
                }
            }
            Some(gz)
        } else {
            None
        };

        let value = scale * data - self.kl_with(&b.prior)?;
        Ok((
            value,
            HyperGrad {
                mean: mean_grad,
                log_alpha: d_log_alpha,
                log_gamma: d_log_gamma,
                log_beta: d_log_beta,
                z: z_grad,
            },
        ))
    }

    pub fn hyper_grad(&self, x: &DMatrix<T>, y: &DVector<T>, scale: T) -> Result<HyperGrad<T>> {
        Ok(self.elbo_and_hyper_grad(x, y, scale, false)?.1)
    }

    pub fn predict(&self, x_star: &DMatrix<T>, target: PredictTarget) -> Result<PredictiveDist<T>> {
        let b = self.batch_terms(x_star)?;
        let q = &self.variational;
        let d = &q.m - &b.prior.g_m;
        let mean = &b.g + b.a.tr_mul(&d);
        let sa = &q.s * &b.a;
        let quad = column_dots(&b.a, &sa);
        let noise = match target {
            PredictTarget::YStar => T::one() / self.beta(),
            PredictTarget::FStar => T::zero(),
        };
        let var = DVector::from_fn(mean.len(), |n, _| {
            noise + b.k_tilde[n].max(T::zero()) + quad[n].max(T::zero())
        });
        Ok(PredictiveDist { mean, var, target })
    }
}
