//! Cost, gradient and diagonal second derivative of
//! `L = 1/2 sum_i ( ||x_i - t_i||^2 + (lambda / a) sum_{j in N_i} w_ij (d_ij - d0_ij)^2 )`.

use crate::matrix::{distance, Matrix};
use crate::scalar::Scalar;
use crate::types::{GradientForm, NeighborGraph};

fn check_shapes<T: Scalar>(x: &Matrix<T>, targets: &Matrix<T>, graph: &NeighborGraph<T>) {
    assert_eq!(x.shape(), targets.shape(), "points and targets must have the same shape");
    assert_eq!(x.rows(), graph.n(), "graph was built for a different number of points");
}

pub fn qqe_cost<T: Scalar>(x: &Matrix<T>, targets: &Matrix<T>, graph: &NeighborGraph<T>, lambda: T) -> T {
    check_shapes(x, targets, graph);
    let fit: T = x.as_slice().iter().zip(targets.as_slice()).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let stress: T = graph
        .edges()
        .map(|(i, j, d0, w)| {
            let diff = distance(x.row(i), x.row(j)) - d0;
            w * diff * diff
        })
        .sum();
    T::lit(0.5) * (fit + lambda / graph.normalization() * stress)
}

/// Gradient of [`qqe_cost`] with respect to the points, targets held fixed.
///
/// `GradientForm::OneSided` keeps only the terms where the point is the
/// source of an edge. Pairs closer than `eps` contribute nothing.
pub fn qqe_gradient<T: Scalar>(
    x: &Matrix<T>,
    targets: &Matrix<T>,
    graph: &NeighborGraph<T>,
    lambda: T,
    eps: T,
    form: GradientForm,
) -> Matrix<T> {
    check_shapes(x, targets, graph);
    let d = x.cols();
    let mut grad = Matrix::from_fn(x.rows(), d, |i, l| x[(i, l)] - targets[(i, l)]);
    if lambda == T::zero() {
        return grad;
    }
    let scale = lambda / graph.normalization();
    for (i, j, d0, _) in graph.edges() {
        let dist = distance(x.row(i), x.row(j));
        if dist <= eps {
            continue;
        }
        let coef = scale * (dist - d0) / (dist * d0);
        for l in 0..d {
            let term = coef * (x[(i, l)] - x[(j, l)]);
            grad[(i, l)] += term;
            if form == GradientForm::Full {
                grad[(j, l)] -= term;
            }
        }
    }
    grad
}

/// Diagonal of the Hessian of [`qqe_cost`], summed over the same edges as
/// [`qqe_gradient`] with the same `form`.
pub fn qqe_hessian_diag<T: Scalar>(
    x: &Matrix<T>,
    targets: &Matrix<T>,
    graph: &NeighborGraph<T>,
    lambda: T,
    eps: T,
    form: GradientForm,
) -> Matrix<T> {
    check_shapes(x, targets, graph);
    let d = x.cols();
    let mut hess = Matrix::from_fn(x.rows(), d, |_, _| T::one());
    if lambda == T::zero() {
        return hess;
    }
    let scale = lambda / graph.normalization();
    for (i, j, d0, _) in graph.edges() {
        let dist = distance(x.row(i), x.row(j));
        if dist <= eps {
            continue;
        }
        let first = (dist - d0) / (dist * d0);
        let cube = dist * dist * dist;
        for l in 0..d {
            let delta = x[(i, l)] - x[(j, l)];
            let term = scale * (first + delta * delta / cube);
            hess[(i, l)] += term;
            if form == GradientForm::Full {
                hess[(j, l)] += term;
            }
        }
    }
    hess
}

/// `x - eta * g / max(|h|, eps)` elementwise.
pub fn quasi_newton_step<T: Scalar>(x: &Matrix<T>, grad: &Matrix<T>, hess: &Matrix<T>, eta: T, eps: T) -> Matrix<T> {
    assert_eq!(x.shape(), grad.shape());
    assert_eq!(x.shape(), hess.shape());
    let data = x
        .as_slice()
        .iter()
        .zip(grad.as_slice())
        .zip(hess.as_slice())
        .map(|((&v, &g), &h)| v - eta * g / h.abs().max(eps))
        .collect();
    Matrix::new(x.rows(), x.cols(), data).expect("same shape as input")
}
