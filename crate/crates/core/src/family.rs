//! Likelihood families.
//!
//! Multinomial coefficients are stored stacked by category: with `C`
//! categories and `p` columns the vector has `(C−1)·p` entries, block `j`
//! holding the coefficients of category `j+1`. Category 0 is the reference
//! with coefficients fixed at zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Family {
    Linear,
    Logistic,
    Multinomial { categories: usize },
}

impl Family {
    /// Number of coefficient blocks (`C−1` for multinomial, else 1).
    pub fn blocks(self) -> usize {
        match self {
            Family::Multinomial { categories } => categories.saturating_sub(1),
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Logistic => "logistic",
            Family::Multinomial { .. } => "multinomial",
        }
    }

    pub fn has_sigma(self) -> bool {
        matches!(self, Family::Linear)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log Σ exp(v)`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Linear predictors: `N × blocks` matrix.
pub fn linear_predictors(family: Family, x: &DMatrix<f64>, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let p = x.ncols();
    let j = family.blocks();
    if beta.len() != p * j {
        return Err(Error::Dimension(format!("beta has {} entries, expected {}", beta.len(), p * j)));
    }
    let b = DMatrix::from_column_slice(p, j, beta.as_slice());
    Ok(x * b)
}

/// Per-observation log-likelihood given linear predictors (one row per
/// observation). `sigma2` is used only by the linear family.
pub fn pointwise_loglik(family: Family, eta: &DMatrix<f64>, y: &[f64], sigma2: f64) -> Vec<f64> {
    match family {
        Family::Linear => {
            let c = -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
            y.iter().enumerate().map(|(i, yi)| c - (yi - eta[(i, 0)]).powi(2) / (2.0 * sigma2)).collect()
        }
        Family::Logistic => y.iter().enumerate().map(|(i, yi)| yi * eta[(i, 0)] - softplus(eta[(i, 0)])).collect(),
        Family::Multinomial { .. } => {
            let j = eta.ncols();
            let mut row = vec![0.0; j + 1];
            y.iter()
                .enumerate()
                .map(|(i, yi)| {
                    for c in 0..j {
                        row[c + 1] = eta[(i, c)];
                    }
                    row[*yi as usize] - log_sum_exp(&row)
                })
                .collect()
        }
    }
}

pub fn log_likelihood(family: Family, x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, sigma2: f64) -> Result<f64> {
    let eta = linear_predictors(family, x, beta)?;
    Ok(pointwise_loglik(family, &eta, y, sigma2).iter().sum())
}

/// Fitted mean on the response scale: the linear predictor for the linear
/// family, the success probability for logistic, and for multinomial the
/// expected category index.
pub fn fitted_mean(family: Family, eta: &DMatrix<f64>) -> Vec<f64> {
    match family {
        Family::Linear => eta.column(0).iter().copied().collect(),
        Family::Logistic => eta.column(0).iter().map(|&e| logistic(e)).collect(),
        Family::Multinomial { .. } => {
            let j = eta.ncols();
            (0..eta.nrows())
                .map(|i| {
                    let mut row = vec![0.0; j + 1];
                    for c in 0..j {
                        row[c + 1] = eta[(i, c)];
                    }
                    let lse = log_sum_exp(&row);
                    row.iter().enumerate().map(|(c, v)| c as f64 * (v - lse).exp()).sum()
                })
                .collect()
        }
    }
}
