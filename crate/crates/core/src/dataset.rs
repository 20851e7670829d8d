use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Design matrix (one row per observation) and scalar targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Real> {
    pub x: DMatrix<T>,
    pub y: DVector<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: DMatrix<T>, y: DVector<T>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Dataset {
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
        }
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            x: self.x.map(|v| U::lit(v.to_f64_lossy())),
            y: self.y.map(|v| U::lit(v.to_f64_lossy())),
        }
    }
}
