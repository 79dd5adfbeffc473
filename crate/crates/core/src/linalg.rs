//! Dense (weighted) least squares with collinearity detection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of an R diagonal entry below which a column counts as collinear.
const RANK_TOL: f64 = 1e-10;

/// Solves min ‖W^{1/2}(y − Xβ)‖² by Householder QR.
///
/// Columns whose R diagonal is negligible relative to the largest one are
/// reported in a [`Error::RankDeficient`].
pub fn least_squares(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>) -> Result<DVector<f64>> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n < d {
        return Err(Error::RankDeficient {
            columns: (n..d).collect(),
        });
    }
    let (xw, yw) = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: w.len(),
                });
            }
            let sw: Vec<f64> = w.iter().map(|v| v.max(0.0).sqrt()).collect();
            let mut xw = x.clone();
            for (i, s) in sw.iter().enumerate() {
                xw.row_mut(i).scale_mut(*s);
            }
            let yw = DVector::from_iterator(n, y.iter().zip(&sw).map(|(v, s)| v * s));
            (xw, yw)
        }
        None => (x.clone(), DVector::from_column_slice(y)),
    };
    let qr = xw.qr();
    let r = qr.r();
    let max_diag = (0..d).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let collinear: Vec<usize> = (0..d)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * max_diag.max(f64::MIN_POSITIVE))
        .collect();
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }
    let qty = qr.q().transpose() * yw;
    r.solve_upper_triangular(&qty).ok_or(Error::RankDeficient {
        columns: Vec::new(),
    })
}
