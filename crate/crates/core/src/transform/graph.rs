use crate::error::{QqeError, Result};
use crate::matrix::{distance, Matrix};
use crate::scalar::Scalar;
use crate::types::NeighborGraph;

/// k-NN graph of the initial points under Euclidean distance, ties broken by
/// the smaller index. Initial distances are clamped below at `eps`.
pub fn build_knn_graph<T: Scalar>(x0: &Matrix<T>, k: usize, eps: T) -> Result<NeighborGraph<T>> {
    let n = x0.rows();
    if k == 0 || k >= n {
        return Err(QqeError::KTooLarge { k, n });
    }
    let mut neighbors = Vec::with_capacity(n * k);
    let mut initial_distances = Vec::with_capacity(n * k);
    let mut candidates: Vec<(T, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        candidates.clear();
        candidates.extend((0..n).filter(|&j| j != i).map(|j| (distance(x0.row(i), x0.row(j)), j)));
        let by_distance = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1));
        candidates.select_nth_unstable_by(k - 1, by_distance);
        candidates[..k].sort_unstable_by(by_distance);
        for &(d, j) in &candidates[..k] {
            neighbors.push(j);
            initial_distances.push(d.max(eps));
        }
    }
    let weights = initial_distances.iter().map(|&d| T::one() / d).collect();
    let normalization = initial_distances.iter().copied().sum::<T>().max(eps);
    Ok(NeighborGraph { k, neighbors, initial_distances, weights, normalization })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_neighbours_in_one_dimension() {
        let x = Matrix::<f64>::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        let g = build_knn_graph(&x, 1, 1e-12).unwrap();
        assert_eq!(g.neighbors_of(0), &[1]);
        assert_eq!(g.neighbors_of(1), &[0]);
        assert_eq!(g.neighbors_of(2), &[1]);
        assert_eq!(g.normalization(), 1.0 + 1.0 + 2.0);
        assert_eq!(g.weights_of(2), &[0.5]);
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let x = Matrix::<f64>::from_rows(&[[0.0], [-1.0], [1.0], [5.0]]).unwrap();
        let g = build_knn_graph(&x, 2, 1e-12).unwrap();
        assert_eq!(g.neighbors_of(0), &[1, 2]);
        let g = build_knn_graph(&x, 1, 1e-12).unwrap();
        assert_eq!(g.neighbors_of(0), &[1]);
    }

    #[test]
    fn complete_graph_when_k_is_n_minus_one() {
        let x = Matrix::<f64>::from_fn(6, 2, |i, j| (i * i + j) as f64);
        let g = build_knn_graph(&x, 5, 1e-12).unwrap();
        for i in 0..6 {
            let mut ns = g.neighbors_of(i).to_vec();
            ns.sort_unstable();
            let expected: Vec<usize> = (0..6).filter(|&j| j != i).collect();
            assert_eq!(ns, expected);
        }
    }

    #[test]
    fn duplicates_are_clamped() {
        let x = Matrix::<f64>::from_rows(&[[1.0, 1.0], [1.0, 1.0], [4.0, 5.0]]).unwrap();
        let g = build_knn_graph(&x, 1, 1e-12).unwrap();
        assert_eq!(g.initial_distances_of(0), &[1e-12]);
        assert_eq!(g.weights_of(0), &[1e12]);
        assert!(g.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn k_out_of_range() {
        let x = Matrix::<f64>::zeros(3, 1);
        assert!(matches!(build_knn_graph(&x, 3, 1e-12), Err(QqeError::KTooLarge { k: 3, n: 3 })));
        assert!(matches!(build_knn_graph(&x, 0, 1e-12), Err(QqeError::KTooLarge { .. })));
    }
}
