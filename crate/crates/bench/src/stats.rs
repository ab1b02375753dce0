//! Summary statistics used in reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("empty series")]
    Empty,
    #[error("series contains a non-positive or non-finite value at index {0}")]
    NonPositive(usize),
    #[error("series contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("regressor is constant")]
    ConstantX,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

fn check_finite(xs: &[f64]) -> Result<(), StatError> {
    if xs.is_empty() {
        return Err(StatError::Empty);
    }
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(StatError::NonFinite(i)),
        None => Ok(()),
    }
}

pub fn mean(xs: &[f64]) -> Result<f64, StatError> {
    check_finite(xs)?;
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (n - 1); zero for a single sample.
pub fn std_dev(xs: &[f64]) -> Result<f64, StatError> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Ok(0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Ok((ss / (xs.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSummary {
    pub harmonic_mean: f64,
    pub std_dev: f64,
}

/// n / sum(1/x) for a series of rates, with the series' standard deviation.
pub fn harmonic_mean(xs: &[f64]) -> Result<HarmonicSummary, StatError> {
    if xs.is_empty() {
        return Err(StatError::Empty);
    }
    if let Some(i) = xs.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(StatError::NonPositive(i));
    }
    // Scaling by the minimum keeps the terms in (0, 1] and makes constant
    // series come out exact.
    let m = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let inv: f64 = xs.iter().map(|x| m / x).sum();
    Ok(HarmonicSummary {
        harmonic_mean: m * (xs.len() as f64 / inv),
        std_dev: std_dev(xs)?,
    })
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>, StatError> {
    check_finite(xs)?;
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Quantile by linear interpolation between closest ranks, position
/// `q * (n - 1)`.
pub fn quantile(xs: &[f64], q: f64) -> Result<f64, StatError> {
    let v = sorted(xs)?;
    Ok(quantile_sorted(&v, q))
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> Result<f64, StatError> {
    quantile(xs, 0.5)
}

pub fn iqr(xs: &[f64]) -> Result<f64, StatError> {
    let v = sorted(xs)?;
    Ok(quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 0 when `y` is constant.
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<Regression, StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatError::TooFew {
            need: 3,
            got: x.len(),
        });
    }
    let (mx, my) = (mean(x)?, mean(y)?);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StatError::ConstantX);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        0.0
    } else {
        (sxy * sxy / (sxx * syy)).min(1.0)
    };
    Ok(Regression {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Regression of a per-cycle series against its cycle index (1-based).
pub fn leak_regression(series: &[f64]) -> Result<Regression, StatError> {
    let x: Vec<f64> = (1..=series.len()).map(|i| i as f64).collect();
    ols(&x, series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadSummary {
    pub median: f64,
    pub iqr: f64,
    pub n: usize,
}

pub fn spread(xs: &[f64]) -> Result<SpreadSummary, StatError> {
    Ok(SpreadSummary {
        median: median(xs)?,
        iqr: iqr(xs)?,
        n: xs.len(),
    })
}
