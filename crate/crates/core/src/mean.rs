//! Mean functions: a one-hidden-layer tanh network and the zero function.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `g(x) = w2 . tanh(W1 x + b1) + b2`.
///
/// The flat parameter layout is `W1` (row-major, hidden x input), `b1`,
/// `w2`, `b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct Mlp<T: Real> {
    pub w1: DMatrix<T>,
    pub b1: DVector<T>,
    pub w2: DVector<T>,
    pub b2: T,
}

impl<T: Real> Mlp<T> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Mlp {
            w1: DMatrix::zeros(hidden, input_dim),
            b1: DVector::zeros(hidden),
            w2: DVector::zeros(hidden),
            b2: T::zero(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut mlp = Self::zeros(input_dim, hidden);
        let lim1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        let lim2 = (6.0 / (hidden + 1) as f64).sqrt();
        for h in 0..hidden {
            for d in 0..input_dim {
                mlp.w1[(h, d)] = T::lit(rng.random_range(-lim1..=lim1));
            }
        }
        for h in 0..hidden {
            mlp.w2[h] = T::lit(rng.random_range(-lim2..=lim2));
        }
        mlp
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    /// `[input, hidden, 1]`.
    pub fn layer_sizes(&self) -> [usize; 3] {
        [self.input_dim(), self.hidden(), 1]
    }

    pub fn num_params(&self) -> usize {
        self.hidden() * (self.input_dim() + 2) + 1
    }

    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for h in 0..self.hidden() {
            for d in 0..self.input_dim() {
                out.push(self.w1[(h, d)]);
            }
        }
        out.extend(self.b1.iter().copied());
        out.extend(self.w2.iter().copied());
        out.push(self.b2);
        out
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let (hid, din) = (self.hidden(), self.input_dim());
        let mut it = flat.iter().copied();
        for h in 0..hid {
            for d in 0..din {
                self.w1[(h, d)] = it.next().unwrap();
            }
        }
        for h in 0..hid {
            self.b1[h] = it.next().unwrap();
        }
        for h in 0..hid {
            self.w2[h] = it.next().unwrap();
        }
        self.b2 = it.next().unwrap();
        Ok(())
    }

    fn check_input(&self, x: &DMatrix<T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Hidden activations, one row per input row.
    fn hidden_layer(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut pre = x * self.w1.transpose();
        for mut row in pre.row_iter_mut() {
            for (v, b) in row.iter_mut().zip(self.b1.iter()) {
                *v = (*v + *b).tanh();
            }
        }
        pre
    }

    pub fn forward(&self, x: &DMatrix<T>) -> Result<DVector<T>> {
        self.check_input(x)?;
        let hidden = self.hidden_layer(x);
        Ok((hidden * &self.w2).add_scalar(self.b2))
    }

    /// Gradient of `sum_n upstream_n * g(x_n)` with respect to the flat parameters.
    pub fn backward(&self, x: &DMatrix<T>, upstream: &DVector<T>) -> Result<Vec<T>> {
        self.check_input(x)?;
        if upstream.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: upstream.len(),
            });
        }
        let hidden = self.hidden_layer(x);
        let d_w2 = hidden.transpose() * upstream;
        let d_b2 = upstream.sum();
        // d pre-activation = upstream * w2 * (1 - tanh^2)
        let mut d_pre = upstream * self.w2.transpose();
        d_pre.zip_apply(&hidden, |dp, h| *dp *= T::one() - h * h);
        let d_w1 = d_pre.transpose() * x;
        let d_b1 = d_pre.row_sum();

        let mut out = Vec::with_capacity(self.num_params());
        for h in 0..self.hidden() {
            for d in 0..self.input_dim() {
                out.push(d_w1[(h, d)]);
            }
        }
        out.extend(d_b1.iter().copied());
        out.extend(d_w2.iter().copied());
        out.push(d_b2);
        Ok(out)
    }

    /// Row `n` holds `upstream_n * dg(x_n)/dx_n`.
    pub fn input_grad(&self, x: &DMatrix<T>, upstream: &DVector<T>) -> Result<DMatrix<T>> {
        self.check_input(x)?;
        let hidden = self.hidden_layer(x);
        let mut d_pre = upstream * self.w2.transpose();
        d_pre.zip_apply(&hidden, |dp, h| *dp *= T::one() - h * h);
        Ok(d_pre * &self.w1)
    }

    /// `|g(x)| <= |w2|_1 + |b2|` for every input.
    pub fn output_bound(&self) -> T {
        self.w2.iter().fold(T::zero(), |acc, w| acc + w.abs()) + self.b2.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MeanFunction<T: Real> {
    Mlp(Mlp<T>),
    Zero,
}

impl<T: Real> MeanFunction<T> {
    pub fn is_zero(&self) -> bool {
        matches!(self, MeanFunction::Zero)
    }

    pub fn num_params(&self) -> usize {
        match self {
            MeanFunction::Mlp(m) => m.num_params(),
            MeanFunction::Zero => 0,
        }
    }

    pub fn params(&self) -> Vec<T> {
        match self {
            MeanFunction::Mlp(m) => m.params(),
            MeanFunction::Zero => Vec::new(),
        }
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        match self {
            MeanFunction::Mlp(m) => m.set_params(flat),
            MeanFunction::Zero if flat.is_empty() => Ok(()),
            MeanFunction::Zero => Err(Error::ZeroVariantHasNoParams),
        }
    }

    pub fn forward(&self, x: &DMatrix<T>) -> Result<DVector<T>> {
        mean_forward(self, x)
    }
}

pub fn mean_forward<T: Real>(mean: &MeanFunction<T>, x: &DMatrix<T>) -> Result<DVector<T>> {
    match mean {
        MeanFunction::Mlp(m) => m.forward(x),
        MeanFunction::Zero => Ok(DVector::zeros(x.nrows())),
    }
}

pub fn mean_backward<T: Real>(
    mean: &MeanFunction<T>,
    x: &DMatrix<T>,
    upstream: &DVector<T>,
) -> Result<Vec<T>> {
    match mean {
        MeanFunction::Mlp(m) => m.backward(x, upstream),
        MeanFunction::Zero => Err(Error::ZeroVariantHasNoParams),
    }
}
