use crate::error::{QqeError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Per-dimension least-squares lines through the qq scatter and the fitted
/// targets on them.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFit<T> {
    /// `(intercept, slope)` for every dimension.
    pub coefficients: Vec<(T, T)>,
    /// Fitted targets: `mu[(i, l)] = intercept_l + slope_l * y_sigma[(i, l)]`.
    pub mu: Matrix<T>,
    /// Dimensions whose reference values are constant; these get slope 0 and
    /// the mean of `x` as intercept.
    pub degenerate: Vec<usize>,
}

pub(crate) struct SimpleRegression<T> {
    pub intercept: T,
    pub slope: T,
    pub ss_res: T,
    pub ss_tot: T,
}

/// Ordinary least squares of `x` on `y`, or `None` when `y` is constant.
pub(crate) fn simple_regression<T: Scalar>(x: &[T], y: &[T]) -> Option<SimpleRegression<T>> {
    let n = T::from_count(x.len());
    let mean_x = x.iter().copied().sum::<T>() / n;
    let mean_y = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut syy, mut sxx) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mean_x, b - mean_y);
        sxy += dx * dy;
        syy += dy * dy;
        sxx += dx * dx;
    }
    let scale = y.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if syy <= T::epsilon() * T::epsilon() * scale * scale * n || y.iter().all(|&v| v == y[0]) {
        return None;
    }
    let slope = sxy / syy;
    let intercept = mean_x - slope * mean_y;
    let ss_res = x.iter().zip(y).map(|(&a, &b)| (a - intercept - slope * b).powi(2)).sum();
    Some(SimpleRegression { intercept, slope, ss_res, ss_tot: sxx })
}

/// Regresses every column of `x` on the same column of the matched
/// reference `y_sigma` (row `i` of `y_sigma` is the partner of `x_i`).
pub fn fit_qq_lines<T: Scalar>(x: &Matrix<T>, y_sigma: &Matrix<T>) -> Result<LineFit<T>> {
    if x.shape() != y_sigma.shape() {
        return Err(QqeError::ShapeMismatch(format!(
            "points are {}x{}, matched reference is {}x{}",
            x.rows(),
            x.cols(),
            y_sigma.rows(),
            y_sigma.cols()
        )));
    }
    let (n, d) = x.shape();
    if n == 0 {
        return Err(QqeError::EmptySample);
    }
    let mut coefficients = Vec::with_capacity(d);
    let mut degenerate = Vec::new();
    for l in 0..d {
        let xl = x.column(l);
        match simple_regression(&xl, &y_sigma.column(l)) {
            Some(fit) => coefficients.push((fit.intercept, fit.slope)),
            None => {
                log::warn!("{}", QqeError::DegenerateReference { dim: l });
                degenerate.push(l);
                coefficients.push((xl.iter().copied().sum::<T>() / T::from_count(n), T::zero()));
            }
        }
    }
    let mu = Matrix::from_fn(n, d, |i, l| {
        let (b0, b1) = coefficients[l];
        b0 + b1 * y_sigma[(i, l)]
    });
    Ok(LineFit { coefficients, mu, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_line() {
        let y = Matrix::<f64>::from_rows(&[[0.0, 1.0], [1.0, 3.0], [2.0, 2.0]]).unwrap();
        let fit = fit_qq_lines(&y, &y).unwrap();
        for &(b0, b1) in &fit.coefficients {
            assert!(b0.abs() < 1e-14 && (b1 - 1.0).abs() < 1e-14);
        }
        assert!(fit.mu.max_abs_diff(&y) < 1e-14);
    }

    #[test]
    fn exact_affine_recovery() {
        let y = Matrix::<f64>::from_rows(&[[0.0], [1.0], [4.0], [-2.0]]).unwrap();
        let x = y.map(|v| 3.0 * v + 2.0);
        let fit = fit_qq_lines(&x, &y).unwrap();
        assert!((fit.coefficients[0].0 - 2.0).abs() < 1e-13);
        assert!((fit.coefficients[0].1 - 3.0).abs() < 1e-13);
    }

    #[test]
    fn constant_reference_falls_back_to_mean() {
        let y = Matrix::<f64>::from_rows(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]]).unwrap();
        let x = Matrix::from_rows(&[[0.0, 0.0], [3.0, 1.0], [6.0, 2.0]]).unwrap();
        let fit = fit_qq_lines(&x, &y).unwrap();
        assert_eq!(fit.degenerate, vec![0]);
        assert_eq!(fit.coefficients[0], (3.0, 0.0));
        assert!(fit.mu.column(0).iter().all(|&v| v == 3.0));
    }
}
