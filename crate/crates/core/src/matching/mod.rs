//! Fuzzy qq-plot matching: pairs every observed point with one reference
//! point, up to an affine map of the reference, by alternating an optimal
//! assignment with a multivariate least-squares regression.

mod assignment;

pub use assignment::{assignment_cost, solve_assignment};

use crate::error::{QqeError, Result};
use crate::matrix::{solve_spd, squared_distance, Matrix};
use crate::scalar::Scalar;
use crate::types::{MatchResult, Permutation};

/// Square matrix of finite, non-negative assignment costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T>(Matrix<T>);

impl<T: Scalar> CostMatrix<T> {
    pub fn new(entries: Matrix<T>) -> Result<Self> {
        if entries.rows() != entries.cols() {
            return Err(QqeError::ShapeMismatch(format!(
                "cost matrix must be square, got {}x{}",
                entries.rows(),
                entries.cols()
            )));
        }
        if let Some((row, col)) = entries.first_non_finite() {
            return Err(QqeError::NonFinite { row, col });
        }
        if entries.as_slice().iter().any(|&v| v < T::zero()) {
            return Err(QqeError::ShapeMismatch("cost matrix entries must be non-negative".into()));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &Matrix<T> {
        &self.0
    }
}

fn check_affine<T: Scalar>(d: usize, a: &Matrix<T>, b: &[T]) -> Result<()> {
    if a.shape() != (d, d) || b.len() != d {
        return Err(QqeError::ShapeMismatch(format!(
            "affine map must be {d}x{d} with a length-{d} offset, got {}x{} and {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    Ok(())
}

/// Applies `y -> A y + b` to every row of `y`.
pub fn apply_affine<T: Scalar>(y: &Matrix<T>, a: &Matrix<T>, b: &[T]) -> Matrix<T> {
    let d = y.cols();
    let mut out = Matrix::zeros(y.rows(), d);
    for (i, row) in y.iter_rows().enumerate() {
        let dst = out.row_mut(i);
        for r in 0..d {
            let mut v = b[r];
            for (c, &yc) in row.iter().enumerate() {
                v += a[(r, c)] * yc;
            }
            dst[r] = v;
        }
    }
    out
}

/// `C(i, j) = ||x_i - A y_j - b||^2`.
pub fn build_cost_matrix<T: Scalar>(
    x: &Matrix<T>,
    y: &Matrix<T>,
    a: &Matrix<T>,
    b: &[T],
) -> Result<CostMatrix<T>> {
    if x.shape() != y.shape() {
        return Err(QqeError::ShapeMismatch(format!(
            "observed sample is {}x{}, reference is {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    check_affine(x.cols(), a, b)?;
    let mapped = apply_affine(y, a, b);
    let n = x.rows();
    CostMatrix::new(Matrix::from_fn(n, n, |i, j| squared_distance(x.row(i), mapped.row(j))))
}

/// Least-squares affine map with `x_i ~ A y_sigma(i) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit<T> {
    pub a: Matrix<T>,
    pub b: Vec<T>,
    /// Set when the normal equations were singular and a ridge term was used.
    pub rank_deficient: bool,
}

/// Multivariate regression of `X` on `[Y_sigma, 1]` through the normal
/// equations. `A^T` is the top `d x d` block of the coefficient matrix and
/// `b^T` its last row.
pub fn fit_affine<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, sigma: &Permutation) -> Result<AffineFit<T>> {
    let (n, d) = x.shape();
    if y.shape() != (n, d) || sigma.len() != n {
        return Err(QqeError::ShapeMismatch(format!(
            "regression needs matching shapes: X {n}x{d}, Y {}x{}, sigma of length {}",
            y.rows(),
            y.cols(),
            sigma.len()
        )));
    }
    if n < d + 1 {
        return Err(QqeError::TooFewPoints { n, required: d + 1 });
    }
    let p = d + 1;
    let mut gram = Matrix::zeros(p, p);
    let mut rhs = Matrix::zeros(p, d);
    let mut design = vec![T::one(); p];
    for i in 0..n {
        design[..d].copy_from_slice(y.row(sigma[i]));
        let xi = x.row(i);
        for r in 0..p {
            let dr = design[r];
            for c in 0..p {
                gram[(r, c)] += dr * design[c];
            }
            for c in 0..d {
                rhs[(r, c)] += dr * xi[c];
            }
        }
    }
    let solved = solve_spd(&gram, &rhs)?;
    if solved.ridge_applied {
        log::warn!("affine regression is rank deficient; ridge fallback engaged");
    }
    let beta = solved.solution;
    let a = Matrix::from_fn(d, d, |r, c| beta[(c, r)]);
    let b = (0..d).map(|c| beta[(d, c)]).collect();
    Ok(AffineFit { a, b, rank_deficient: solved.ridge_applied })
}

/// `sum_i ||x_i - A y_sigma(i) - b||^2`.
pub fn matching_objective<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, sigma: &Permutation, a: &Matrix<T>, b: &[T]) -> T {
    let mapped = apply_affine(y, a, b);
    (0..x.rows()).map(|i| squared_distance(x.row(i), mapped.row(sigma[i]))).sum()
}

/// Alternates assignment and regression from `A = I`, `b = 0` until the
/// permutation stops changing or `max_rounds` assignments have been solved.
pub fn fuzzy_match<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, max_rounds: usize) -> Result<MatchResult<T>> {
    let (n, d) = x.shape();
    if y.shape() != (n, d) {
        return Err(QqeError::ShapeMismatch(format!(
            "reference must be resized to {n}x{d} before matching, got {}x{}",
            y.rows(),
            y.cols()
        )));
    }
    if n < d + 1 {
        return Err(QqeError::TooFewPoints { n, required: d + 1 });
    }
    if max_rounds == 0 {
        return Err(QqeError::InvalidConfig("max_rounds must be positive".into()));
    }

    let mut a = Matrix::identity(d);
    let mut b = vec![T::zero(); d];
    let mut previous: Option<Permutation> = None;
    let mut trace = Vec::new();
    let mut rank_deficient = false;
    let mut converged = false;
    let mut rounds = 0;

    while rounds < max_rounds {
        rounds += 1;
        let costs = build_cost_matrix(x, y, &a, &b)?;
        let sigma = solve_assignment(&costs);
        trace.push(assignment_cost(&costs, &sigma));
        if previous.as_ref() == Some(&sigma) {
            converged = true;
            break;
        }
        let fit = fit_affine(x, y, &sigma)?;
        rank_deficient |= fit.rank_deficient;
        a = fit.a;
        b = fit.b;
        trace.push(matching_objective(x, y, &sigma, &a, &b));
        previous = Some(sigma);
    }

    Ok(MatchResult {
        sigma: previous.expect("at least one round ran"),
        a,
        b,
        iterations: rounds,
        converged,
        objective_trace: trace,
        rank_deficient,
    })
}
