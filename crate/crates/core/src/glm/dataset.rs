use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expfam::Family;

/// Covariates `X` (n×d) and responses `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl RegressionDataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() || x.nrows() == 0 {
            return Err(Error::EmptyData);
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::data(0, "dataset has no covariates"));
        }
        for i in 0..x.nrows() {
            if !y[i].is_finite() || x.row(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::data(i, "non-finite value"));
            }
        }
        Ok(RegressionDataset { x, y })
    }

    /// Builds a dataset from row-major covariates.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).ok_or(Error::EmptyData)?;
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::data(
                i,
                format!("expected {d} covariates, got {}", rows[i].len()),
            ));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), d, &flat), y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Copy with a column of ones appended as the last covariate.
    pub fn with_intercept(&self) -> Self {
        let n = self.n();
        let x = self.x.clone().insert_column(self.d(), 1.0);
        debug_assert_eq!(x.nrows(), n);
        RegressionDataset {
            x,
            y: self.y.clone(),
        }
    }

    /// Checks every response lies in the family's support.
    pub fn validate_for(&self, family: Family) -> Result<()> {
        match self.y.iter().position(|&y| !family.in_support(y)) {
            Some(i) => Err(Error::data(
                i,
                format!(
                    "response {} outside the {} support",
                    self.y[i],
                    family.name()
                ),
            )),
            None => Ok(()),
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// `Xw`.
    pub fn linear_predictor(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.x.row(i).iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
