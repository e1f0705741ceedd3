//! Univariate empirical quantiles with configurable plotting positions, and
//! multivariate spatial ranks.

use serde::{Deserialize, Serialize};

use crate::error::{QqeError, Result};
use crate::matrix::{distance, Matrix};
use crate::scalar::Scalar;

/// Plotting positions `p_i = (i - alpha) / (n - alpha - beta + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionScheme {
    pub alpha: f64,
    pub beta: f64,
}

impl PositionScheme {
    /// `i / (n + 1)`.
    pub const WEIBULL: Self = Self { alpha: 0.0, beta: 0.0 };
    /// `(i - 0.5) / n`.
    pub const HAZEN: Self = Self { alpha: 0.5, beta: 0.5 };
    /// `(i - 1/3) / (n + 1/3)`, approximately median-unbiased.
    pub const MEDIAN_UNBIASED: Self = Self { alpha: 1.0 / 3.0, beta: 1.0 / 3.0 };
    /// `i / n`. The last position is exactly 1.
    pub const I_OVER_N: Self = Self { alpha: 0.0, beta: 1.0 };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
            return Err(QqeError::InvalidConfig(format!(
                "alpha and beta must lie in [0, 1], got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

impl Default for PositionScheme {
    fn default() -> Self {
        Self::MEDIAN_UNBIASED
    }
}

/// Plotting positions `p_1 < ... < p_n` for a sample of size `n`.
pub fn compute_positions<T: Scalar>(n: usize, scheme: PositionScheme) -> Result<Vec<T>> {
    if n == 0 {
        return Err(QqeError::EmptySample);
    }
    let PositionScheme { alpha, beta } = PositionScheme::new(scheme.alpha, scheme.beta)?;
    let denominator = n as f64 - alpha - beta + 1.0;
    if denominator <= 0.0 {
        return Err(QqeError::InvalidScheme { denominator });
    }
    let (alpha, denominator) = (T::lit(alpha), T::lit(denominator));
    Ok((1..=n).map(|i| (T::from_count(i) - alpha) / denominator).collect())
}

/// Left-continuous inverse of the empirical CDF: the smallest order
/// statistic `x_(i)` with `i / n >= p`.
pub fn empirical_quantile<T: Scalar>(sample: &[T], p: T) -> Result<T> {
    if sample.is_empty() {
        return Err(QqeError::EmptySample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    Ok(quantile_of_sorted(&sorted, p))
}

pub(crate) fn quantile_of_sorted<T: Scalar>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    let nf = T::from_count(n);
    let p = p.max(T::zero()).min(T::one());
    let mut i = (p * nf).ceil().to_usize().unwrap_or(n).clamp(1, n);
    // guard against p * n rounding up past an exact boundary
    while i > 1 && T::from_count(i - 1) / nf >= p {
        i -= 1;
    }
    sorted[i - 1]
}

/// Spatial rank of every point: the average unit direction from each other
/// sample point towards it, scaled by `1/n`.
///
/// Exact duplicates contribute nothing, so every rank lies strictly inside the
/// unit ball.
pub fn spatial_ranks<T: Scalar>(points: &Matrix<T>) -> Matrix<T> {
    let (n, d) = points.shape();
    let nf = T::from_count(n);
    let mut ranks = Matrix::zeros(n, d);
    for i in 0..n {
        let xi = points.row(i);
        let mut acc = vec![T::zero(); d];
        for j in 0..n {
            if j == i {
                continue;
            }
            let xj = points.row(j);
            let dist = distance(xi, xj);
            if dist == T::zero() {
                continue;
            }
            for ((a, &p), &q) in acc.iter_mut().zip(xi).zip(xj) {
                *a += (p - q) / dist;
            }
        }
        for (r, a) in ranks.row_mut(i).iter_mut().zip(acc) {
            *r = a / nf;
        }
    }
    ranks
}
